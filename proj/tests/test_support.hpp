#pragma once

// libtorch's logging header defines CHECK* macros of its own; load it first
// and let doctest's assertion macros take precedence.
#include <torch/torch.h>
#undef CHECK
#undef CHECK_EQ
#undef CHECK_NE
#undef CHECK_LT
#undef CHECK_LE
#undef CHECK_GT
#undef CHECK_GE
#undef CHECK_NOTNULL
#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include "common/error.hpp"

namespace crg::test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "crg") {
        static std::atomic<int> counter{0};
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                (tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

template <typename F>
ErrorCode error_code_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected crg::Error to be thrown");
    return ErrorCode::Internal;
}

}  // namespace crg::test

#define CHECK_ERROR_CODE(expr, expected) \
    CHECK(::crg::test::error_code_of([&] { (void)(expr); }) == ::crg::ErrorCode::expected)
