#include "workspace.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include "api.hpp"

namespace crgtool {

namespace {

std::string file_stem(const fs::path& p, const std::string& ext) {
    auto name = p.filename().string();
    if (!ext.empty() && name.size() > ext.size() && name.compare(name.size() - ext.size(), ext.size(), ext) == 0)
        name.resize(name.size() - ext.size());
    return name;
}

// "<name>-<digest>" -> (name, digest)
std::pair<std::string, std::string> split_name(const std::string& stem) {
    const auto dash = stem.rfind('-');
    if (dash == std::string::npos) return {stem, ""};
    return {stem.substr(0, dash), stem.substr(dash + 1)};
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const auto t = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[40];
    std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%S", &tm);
    char out[48];
    std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
    return out;
}

std::string short_digest(const std::string& digest) { return digest.substr(0, 12); }

void write_text_atomic(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const auto tmp = fs::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ApiError(CRG_ERR_IO, "cannot write " + tmp.string());
        out << text;
        if (!out) throw ApiError(CRG_ERR_IO, "cannot write " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ApiError(CRG_ERR_IO, "cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Workspace::Workspace(fs::path root) : root_(std::move(root)) {
    for (const auto& dir : {datasets(), checkpoints(), directions(), reports(), logs()}) fs::create_directories(dir);
}

fs::path Workspace::resolve(const fs::path& dir, const std::string& prefix, const std::string& ext,
                            const std::string& what, const std::string& ref) const {
    if (!ref.empty() && fs::exists(ref)) return ref;
    std::vector<fs::path> hits;
    std::vector<fs::path> exact;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const auto fname = entry.path().filename().string();
        if (!prefix.empty() && fname.rfind(prefix + "-", 0) != 0) continue;
        if (!ext.empty() && (!ends_with(fname, ext) || ends_with(fname, ".stats.json"))) continue;
        if (ext.empty() && !entry.is_directory()) continue;
        auto stem = file_stem(entry.path(), ext);
        if (!prefix.empty()) stem = stem.substr(prefix.size() + 1);
        const auto [name, digest] = split_name(stem);
        if (ref.empty() || stem == ref) {
            (stem == ref ? exact : hits).push_back(entry.path());
        } else if (name == ref || (ref.size() >= 4 && digest.rfind(ref, 0) == 0)) {
            hits.push_back(entry.path());
        }
    }
    if (exact.size() == 1) return exact.front();
    if (hits.size() == 1) return hits.front();
    const std::string label = ref.empty() ? std::string("(none given)") : "'" + ref + "'";
    if (hits.empty()) throw ApiError(CRG_ERR_NOT_FOUND, "no " + what + " matching " + label + " in " + dir.string());
    std::string names;
    for (const auto& h : hits) names += " " + h.filename().string();
    throw ApiError(CRG_ERR_NOT_FOUND, "ambiguous " + what + " reference " + label + "; candidates:" + names);
}

fs::path Workspace::resolve_dataset(const std::string& ref) const { return resolve(datasets(), "", "", "dataset", ref); }

fs::path Workspace::resolve_checkpoint(const std::string& kind, const std::string& ref) const {
    return resolve(checkpoints(), kind, ".ckpt", kind + " checkpoint", ref);
}

fs::path Workspace::resolve_direction(const std::string& ref) const {
    return resolve(directions(), "", ".json", "direction", ref);
}

std::optional<fs::path> Workspace::find_dataset(const std::string& digest) const {
    const auto key = short_digest(digest);
    for (const auto& entry : fs::directory_iterator(datasets())) {
        if (!entry.is_directory()) continue;
        if (split_name(entry.path().filename().string()).second == key &&
            fs::exists(entry.path() / "manifest.json"))
            return entry.path();
    }
    return std::nullopt;
}

std::optional<fs::path> Workspace::find_checkpoint(const std::string& kind, const std::string& digest) const {
    const auto key = short_digest(digest);
    for (const auto& entry : fs::directory_iterator(checkpoints())) {
        const auto fname = entry.path().filename().string();
        if (fname.rfind(kind + "-", 0) != 0 || !ends_with(fname, ".ckpt")) continue;
        if (split_name(file_stem(entry.path(), ".ckpt")).second == key) return entry.path();
    }
    return std::nullopt;
}

fs::path Workspace::dataset_path(const std::string& name, const std::string& digest) const {
    return datasets() / (name + "-" + short_digest(digest));
}

fs::path Workspace::checkpoint_staging(const std::string& kind) const {
    return checkpoints() / (".staging-" + kind + "-" + utc_timestamp() + ".ckpt");
}

fs::path Workspace::store_checkpoint(const std::string& kind, const std::string& name,
                                     const fs::path& written) const {
    const auto digest = file_sha256(written.string());
    const auto final_path = checkpoints() / (kind + "-" + name + "-" + short_digest(digest) + ".ckpt");
    if (fs::exists(final_path)) {
        if (file_sha256(final_path.string()) != digest)
            throw ApiError(CRG_ERR_DIGEST, "refusing to overwrite " + final_path.string() + " with different content");
        fs::remove(written);
    } else {
        fs::rename(written, final_path);
    }
    return final_path;
}

std::string Workspace::direction_id(const nlohmann::json& direction) {
    const nlohmann::json key = {{"raw", direction.at("raw")}, {"unit", direction.at("unit")}};
    return sha256(key.dump()).substr(0, 16);
}

fs::path Workspace::store_direction(const std::string& name, const nlohmann::json& direction) const {
    const auto path = directions() / (name + "-" + direction_id(direction) + ".json");
    if (!fs::exists(path)) write_text_atomic(path, direction.dump(2) + "\n");
    return path;
}

fs::path Workspace::stats_path(const fs::path& direction_file) {
    return direction_file.parent_path() / (file_stem(direction_file, ".json") + ".stats.json");
}

std::vector<ModelPair> Workspace::model_pairs() const {
    std::vector<ModelPair> out;
    for (const auto& entry : fs::directory_iterator(checkpoints())) {
        const auto fname = entry.path().filename().string();
        if (fname.rfind(std::string(kEncoder) + "-", 0) != 0 || !ends_with(fname, ".ckpt")) continue;
        auto enc = load_encoder(entry.path().string());
        char* cfg = nullptr;
        check(crg_encoder_training_config(enc.get(), &cfg));
        const auto training = take_json(cfg);
        if (!training.contains("generator_checkpoint")) continue;
        const auto gen_digest = training.at("generator_checkpoint").get<std::string>();
        const auto gen = find_checkpoint(kGenerator, gen_digest);
        if (!gen) continue;
        ModelPair pair;
        pair.encoder = entry.path();
        pair.generator = *gen;
        pair.encoder_digest = split_name(file_stem(entry.path(), ".ckpt")).second;
        pair.generator_digest = short_digest(gen_digest);
        pair.id = pair.encoder_digest;
        out.push_back(pair);
    }
    std::sort(out.begin(), out.end(), [](const ModelPair& a, const ModelPair& b) { return a.id < b.id; });
    return out;
}

void Workspace::append_provenance(const nlohmann::json& record) const {
    std::ofstream out(logs() / "provenance.jsonl", std::ios::app);
    out << record.dump() << "\n";
}

fs::path Workspace::new_log_path(const std::string& command) const {
    return logs() / (command + "-" + utc_timestamp() + ".jsonl");
}

}  // namespace crgtool
