#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "pbm/dsl.hpp"
#include "pbm/error.hpp"

namespace pbm::test {

inline std::string fixture_path(const std::string& name) { return std::string(PBM_FIXTURE_DIR) + "/" + name; }

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline Document case_study() { return parse(read_file(fixture_path("unicauca.pbm"))); }
inline Document case_study_compiled() { return parse(read_file(fixture_path("unicauca_compiled.pbm"))); }

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("pbm-test-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string str() const { return path_.string(); }

private:
    std::filesystem::path path_;
};

/// Monday 2024-01-01 at local `hh:mm` in UTC-05:00, as epoch seconds.
inline std::int64_t monday_2024(int hh, int mm) { return 1704085200 + hh * 3600 + mm * 60; }

}  // namespace pbm::test
