#include "common/io.hpp"

#include <fstream>
#include <sstream>

#include "common/error.hpp"

namespace crg {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorCode::Io, "cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(static_cast<bool>(out), ErrorCode::Io, "cannot open " + tmp.string() + " for writing");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        require(static_cast<bool>(out), ErrorCode::Io, "failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path, ec);
    require(!ec, ErrorCode::Io, "cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

void append_line(const std::filesystem::path& path, std::string_view line) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary | std::ios::app);
    require(static_cast<bool>(out), ErrorCode::Io, "cannot open " + path.string() + " for appending");
    out << line << '\n';
    require(static_cast<bool>(out), ErrorCode::Io, "failed appending to " + path.string());
}

}  // namespace crg
