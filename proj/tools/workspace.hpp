#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace crgtool {

namespace fs = std::filesystem;

// Artifact kinds stored under checkpoints/ as <kind>-<name>-<digest12>.ckpt.
inline constexpr const char* kGenerator = "generator";
inline constexpr const char* kEncoder = "encoder";
inline constexpr const char* kDiscriminator = "discriminator";

struct ModelPair {
    std::string id;  // encoder checkpoint digest prefix
    fs::path encoder;
    fs::path generator;
    std::string encoder_digest;
    std::string generator_digest;
};

// Directory layout: datasets/, checkpoints/, directions/, reports/, logs/.
// Artifacts carry a content digest in their file name, so a new artifact
// never replaces an existing one with different content.
class Workspace {
public:
    explicit Workspace(fs::path root);

    const fs::path& root() const { return root_; }
    fs::path datasets() const { return root_ / "datasets"; }
    fs::path checkpoints() const { return root_ / "checkpoints"; }
    fs::path directions() const { return root_ / "directions"; }
    fs::path reports() const { return root_ / "reports"; }
    fs::path logs() const { return root_ / "logs"; }

    // ref: an existing path, an artifact name, or a digest prefix; an empty
    // ref selects the only artifact of that kind. Throws ApiError(NOT_FOUND)
    // when nothing or more than one artifact matches.
    fs::path resolve_dataset(const std::string& ref) const;
    fs::path resolve_checkpoint(const std::string& kind, const std::string& ref) const;
    fs::path resolve_direction(const std::string& ref) const;

    std::optional<fs::path> find_dataset(const std::string& digest) const;
    std::optional<fs::path> find_checkpoint(const std::string& kind, const std::string& digest) const;

    fs::path dataset_path(const std::string& name, const std::string& digest) const;
    // Moves a freshly written checkpoint to its digest-addressed name and
    // returns the final path (an identical existing file is kept).
    fs::path store_checkpoint(const std::string& kind, const std::string& name, const fs::path& written) const;
    fs::path checkpoint_staging(const std::string& kind) const;

    static std::string direction_id(const nlohmann::json& direction);
    // Writes directions/<name>-<id>.json unless present; returns the path.
    fs::path store_direction(const std::string& name, const nlohmann::json& direction) const;
    static fs::path stats_path(const fs::path& direction_file);

    std::vector<ModelPair> model_pairs() const;

    void append_provenance(const nlohmann::json& record) const;
    fs::path new_log_path(const std::string& command) const;

private:
    fs::path resolve(const fs::path& dir, const std::string& prefix, const std::string& ext, const std::string& what,
                     const std::string& ref) const;
    fs::path root_;
};

std::string utc_timestamp();
std::string short_digest(const std::string& digest);
void write_text_atomic(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

}  // namespace crgtool
