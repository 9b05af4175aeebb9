#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "api.hpp"
#include "workspace.hpp"

namespace httplib {
class Server;
}

namespace crgtool {

// HTTP front-end over the workspace's generator/encoder pairs. Loaded
// models are shared read-only between request threads; direction and
// statistics writes are serialized.
class Service {
public:
    explicit Service(Workspace workspace);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    // Binds (port 0 picks a free port) and serves on a background thread;
    // returns the bound port.
    int start(const std::string& host, int port);
    // Binds and serves on the calling thread until stop().
    bool listen(const std::string& host, int port);
    void stop();

    struct Model {
        ModelPair pair;
        GeneratorPtr generator;
        EncoderPtr encoder;
        nlohmann::json training;
    };

private:
    void routes();
    std::shared_ptr<const Model> model(const std::string& id);
    std::string load_direction(const std::string& id, fs::path* file = nullptr) const;
    std::string stats_for(const std::string& direction_id, const Model* hint);
    std::vector<double> latent_from(const nlohmann::json& body, const Model& m) const;

    Workspace ws_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    std::mutex models_mutex_;
    std::map<std::string, std::shared_ptr<const Model>> models_;
    std::mutex store_mutex_;
};

}  // namespace crgtool
