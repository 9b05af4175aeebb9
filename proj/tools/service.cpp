#include "service.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <random>
#include <sstream>

namespace crgtool {

namespace {

class HttpError : public std::runtime_error {
public:
    HttpError(int status, const std::string& message) : std::runtime_error(message), status_(status) {}
    int status() const { return status_; }

private:
    int status_;
};

int http_status(crg_status s) {
    switch (s) {
        case CRG_ERR_INVALID_ARGUMENT:
        case CRG_ERR_CONFIG:
        case CRG_ERR_IO:
        case CRG_ERR_TRUNCATED:
            return 400;
        case CRG_ERR_NOT_FOUND:
            return 404;
        case CRG_ERR_SHAPE:
        case CRG_ERR_DEGENERATE:
        case CRG_ERR_ORIENTATION:
        case CRG_ERR_NUMERIC:
            return 422;
        default:
            return 500;
    }
}

std::string error_id() {
    static thread_local std::mt19937_64 rng{std::random_device{}()};
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng()));
    return buf;
}

void send_error(httplib::Response& res, int status, const std::string& message, const std::string& kind) {
    nlohmann::json body = {{"error", kind}, {"message", message}};
    if (status >= 500) {
        const auto id = error_id();
        spdlog::error("request failed [{}]: {}", id, message);
        body = {{"error", "internal"}, {"id", id}, {"message", "internal error; see server log entry " + id}};
    }
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

template <typename F>
httplib::Server::Handler handler(F&& fn) {
    return [fn = std::forward<F>(fn)](const httplib::Request& req, httplib::Response& res) {
        try {
            fn(req, res);
        } catch (const HttpError& e) {
            send_error(res, e.status(), e.what(), e.status() == 404 ? "not_found" : "bad_request");
        } catch (const ApiError& e) {
            send_error(res, http_status(e.status()), e.what(), crg_status_name(e.status()));
        } catch (const nlohmann::json::exception& e) {
            send_error(res, 400, std::string("malformed request: ") + e.what(), "bad_request");
        } catch (const std::exception& e) {
            send_error(res, 500, e.what(), "internal");
        }
    };
}

nlohmann::json parse_body(const httplib::Request& req) {
    try {
        auto j = nlohmann::json::parse(req.body);
        if (!j.is_object()) throw HttpError(400, "request body must be a JSON object");
        return j;
    } catch (const nlohmann::json::parse_error& e) {
        throw HttpError(400, std::string("malformed JSON body: ") + e.what());
    }
}

const nlohmann::json& field(const nlohmann::json& body, const char* name) {
    if (!body.contains(name)) throw HttpError(400, std::string("missing field '") + name + "'");
    return body.at(name);
}

void send_json(httplib::Response& res, const nlohmann::json& j) { res.set_content(j.dump(), "application/json"); }

std::vector<double> parse_z_list(const std::string& text) {
    std::vector<double> z;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            z.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw HttpError(400, "z must be a comma-separated list of numbers");
        }
    }
    if (z.empty()) throw HttpError(400, "z must not be empty");
    return z;
}

}  // namespace

Service::Service(Workspace workspace) : ws_(std::move(workspace)), server_(std::make_unique<httplib::Server>()) {
    routes();
}

Service::~Service() { stop(); }

int Service::start(const std::string& host, int port) {
    const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw ApiError(CRG_ERR_IO, "cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return bound;
}

bool Service::listen(const std::string& host, int port) { return server_->listen(host, port); }

void Service::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

std::shared_ptr<const Service::Model> Service::model(const std::string& id) {
    const auto pairs = ws_.model_pairs();
    std::vector<ModelPair> hits;
    for (const auto& p : pairs)
        if (id.empty() || p.id.rfind(id, 0) == 0 || p.encoder.stem().string() == id) hits.push_back(p);
    if (hits.empty()) throw HttpError(404, "unknown model '" + id + "'");
    if (hits.size() > 1) throw HttpError(404, "model reference '" + id + "' is ambiguous");
    const auto& pair = hits.front();
    std::lock_guard<std::mutex> lock(models_mutex_);
    if (auto it = models_.find(pair.id); it != models_.end()) return it->second;
    auto m = std::make_shared<Model>();
    m->pair = pair;
    m->generator = load_generator(pair.generator.string());
    m->encoder = load_encoder(pair.encoder.string());
    char* cfg = nullptr;
    check(crg_encoder_training_config(m->encoder.get(), &cfg));
    m->training = take_json(cfg);
    models_[pair.id] = m;
    return m;
}

std::string Service::load_direction(const std::string& id, fs::path* file) const {
    if (id.empty()) throw HttpError(400, "missing direction_id");
    fs::path path;
    try {
        path = ws_.resolve_direction(id);
    } catch (const ApiError&) {
        throw HttpError(404, "unknown direction '" + id + "'");
    }
    if (file) *file = path;
    return read_text(path);
}

std::string Service::stats_for(const std::string& direction_id, const Model* hint) {
    fs::path file;
    const auto text = load_direction(direction_id, &file);
    const auto stats_file = Workspace::stats_path(file);
    {
        std::lock_guard<std::mutex> lock(store_mutex_);
        if (fs::exists(stats_file)) return read_text(stats_file);
    }
    const auto doc = nlohmann::json::parse(text);
    const auto attribute = doc.value("attribute", "");
    std::shared_ptr<const Model> owned;
    if (!hint) {
        owned = model(doc.value("model", ""));
        hint = owned.get();
    }
    const auto dataset_digest = hint->training.value("dataset_digest", "");
    const auto dataset_dir = dataset_digest.empty() ? std::nullopt : ws_.find_dataset(dataset_digest);
    if (attribute.empty() || !dataset_dir)
        throw HttpError(404, "no projection statistics for direction '" + direction_id +
                                 "' (run `analyze` or create it with an attribute and a workspace dataset)");

    auto ds = load_dataset(dataset_dir->string(), false);
    const auto n = crg_dataset_size(ds.get());
    std::vector<int> labels(n);
    check(crg_dataset_labels(ds.get(), attribute.c_str(), labels.data()));
    constexpr std::size_t per_class = 250;
    std::vector<Image> keep;
    std::vector<const crg_image*> neutral, attributed;
    for (std::size_t i = 0; i < n; ++i) {
        auto& bucket = labels[i] ? attributed : neutral;
        if (bucket.size() >= per_class) continue;
        keep.push_back(dataset_image(ds.get(), i));
        bucket.push_back(keep.back().get());
    }
    char* out = nullptr;
    check(crg_analyze(hint->encoder.get(), neutral.data(), neutral.size(), attributed.data(), attributed.size(),
                      text.c_str(), nullptr, 20, &out),
          "fitting projection statistics");
    const auto result = take_json(out);
    const auto stats = result.dump(2) + "\n";
    std::lock_guard<std::mutex> lock(store_mutex_);
    if (!fs::exists(stats_file)) write_text_atomic(stats_file, stats);
    return read_text(stats_file);
}

std::vector<double> Service::latent_from(const nlohmann::json& body, const Model& m) const {
    if (body.contains("z")) {
        auto z = body.at("z").get<std::vector<double>>();
        if (static_cast<int>(z.size()) != crg_generator_latent_dim(m.generator.get()))
            throw ApiError(CRG_ERR_SHAPE, "z has " + std::to_string(z.size()) + " components; the model expects " +
                                              std::to_string(crg_generator_latent_dim(m.generator.get())));
        return z;
    }
    if (body.contains("image")) {
        auto img = decode_png(base64_decode(body.at("image").get<std::string>()));
        return encode(m.encoder.get(), img.get());
    }
    throw HttpError(400, "request needs either 'z' or 'image'");
}

void Service::routes() {
    auto& s = *server_;

    s.Get("/api/models", handler([this](const httplib::Request&, httplib::Response& res) {
        auto list = nlohmann::json::array();
        for (const auto& p : ws_.model_pairs()) {
            auto m = model(p.id);
            list.push_back({{"id", p.id},
                            {"encoder", p.encoder.filename().string()},
                            {"generator", p.generator.filename().string()},
                            {"encoder_digest", p.encoder_digest},
                            {"generator_digest", p.generator_digest},
                            {"latent_dim", crg_generator_latent_dim(m->generator.get())},
                            {"resolution", crg_generator_resolution(m->generator.get())}});
        }
        send_json(res, list);
    }));

    s.Post("/api/encode", handler([this](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        auto m = model(body.value("model", ""));
        auto img = decode_png(base64_decode(field(body, "image").get<std::string>()));
        send_json(res, {{"z", encode(m->encoder.get(), img.get())}});
    }));

    s.Post("/api/direction", handler([this](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        auto m = model(body.value("model", ""));
        auto neutral = decode_png(base64_decode(field(body, "neutral_image").get<std::string>()));
        auto attributed = decode_png(base64_decode(field(body, "attributed_image").get<std::string>()));
        const auto attribute = body.value("attribute", "");
        char* out = nullptr;
        check(crg_direction_from_images(m->encoder.get(), neutral.get(), attributed.get(), attribute.c_str(), &out),
              "building direction");
        auto doc = take_json(out);
        doc["model"] = m->pair.id;
        const auto name = body.value("name", attribute.empty() ? std::string("direction") : attribute);
        fs::path stored;
        {
            std::lock_guard<std::mutex> lock(store_mutex_);
            stored = ws_.store_direction(name, doc);
        }
        spdlog::info("direction {} stored at {}", Workspace::direction_id(doc), stored.string());
        send_json(res, {{"direction_id", Workspace::direction_id(doc)},
                        {"raw", doc["raw"]},
                        {"unit", doc["unit"]},
                        {"attribute", attribute}});
    }));

    s.Post("/api/edit", handler([this](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        auto m = model(body.value("model", ""));
        auto z = latent_from(body, *m);
        const bool use_unit = body.value("use_unit", false);
        nlohmann::json edits = body.contains("edits")
                                   ? body.at("edits")
                                   : nlohmann::json::array({{{"direction_id", field(body, "direction_id")},
                                                             {"k", field(body, "k")}}});
        for (const auto& e : edits)
            z = edit_latent(load_direction(field(e, "direction_id").get<std::string>()), z,
                            field(e, "k").get<double>(), use_unit);
        auto img = generate(m->generator.get(), z);
        const auto png = encode_png(img.get());
        res.set_content(std::string(png.begin(), png.end()), "image/png");
    }));

    s.Post("/api/sweep", handler([this](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        auto m = model(body.value("model", ""));
        const auto z = latent_from(body, *m);
        const auto direction_id = field(body, "direction_id").get<std::string>();
        const auto direction = load_direction(direction_id);
        const bool use_unit = body.value("use_unit", false);
        std::vector<double> ks;
        if (body.contains("k_list")) {
            ks = body.at("k_list").get<std::vector<double>>();
        } else {
            const auto stats = nlohmann::json::parse(stats_for(direction_id, m.get()));
            const auto r = k_range(direction, stats.at("stats").dump(), z, use_unit);
            constexpr int points = 21;
            for (int i = 0; i < points; ++i) ks.push_back(r.lo + (r.hi - r.lo) * i / (points - 1));
        }
        auto images = nlohmann::json::array();
        for (double k : ks) {
            auto img = generate(m->generator.get(), edit_latent(direction, z, k, use_unit));
            images.push_back(base64_encode(encode_png(img.get())));
        }
        send_json(res, {{"k", ks}, {"images", images}});
    }));

    s.Get("/api/projection-stats", handler([this](const httplib::Request& req, httplib::Response& res) {
        const auto id = req.get_param_value("direction_id");
        const auto model_ref = req.get_param_value("model");
        std::shared_ptr<const Model> m;
        if (!model_ref.empty()) m = model(model_ref);
        send_json(res, nlohmann::json::parse(stats_for(id, m.get())));
    }));

    s.Get("/api/k-range", handler([this](const httplib::Request& req, httplib::Response& res) {
        const auto id = req.get_param_value("direction_id");
        if (!req.has_param("z")) throw HttpError(400, "missing query parameter 'z'");
        const auto z = parse_z_list(req.get_param_value("z"));
        const auto model_ref = req.get_param_value("model");
        std::shared_ptr<const Model> m;
        if (!model_ref.empty()) m = model(model_ref);
        const auto direction = load_direction(id);
        const auto stats = nlohmann::json::parse(stats_for(id, m.get()));
        const bool use_unit = req.get_param_value("use_unit") == "1" || req.get_param_value("use_unit") == "true";
        const auto r = k_range(direction, stats.at("stats").dump(), z, use_unit);
        send_json(res, {{"k_lo", r.lo}, {"k_hi", r.hi}});
    }));
}

}  // namespace crgtool
