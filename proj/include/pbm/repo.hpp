#pragma once

// Versioned policy repository: a directory holding `manifest` and one
// canonical document per version (`v0001.pbm`, `v0002.pbm`, ...).
// The manifest has one tab-separated line per version:
//   version  created(epoch s)  checksum(FNV-1a 64, hex)  filename

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pbm/dsl.hpp"

namespace pbm {

std::uint64_t fnv1a64(std::string_view bytes) noexcept;
/// 16 lowercase hex digits.
std::string fnv1a64_hex(std::string_view bytes);

struct RepoVersion {
    int version = 0;
    std::int64_t created = 0;
    std::string checksum;
    std::string path;  // file name relative to the repository directory

    bool operator==(const RepoVersion&) const = default;
};

using Clock = std::function<std::int64_t()>;

/// Seconds since the epoch from the system clock.
std::int64_t system_now();

class Repository {
public:
    explicit Repository(std::filesystem::path dir, Clock clock = system_now);

    const std::filesystem::path& dir() const noexcept { return dir_; }

    /// Appends a new version. Throws IoError if the directory is missing or
    /// unwritable and RepoError if the manifest is malformed or the written
    /// file does not read back with the expected checksum.
    RepoVersion commit(const Document& doc);

    /// Throws RepoError for an unknown version or a checksum mismatch.
    Document load(int version) const;
    std::string load_text(int version) const;

    std::vector<RepoVersion> log() const;
    std::optional<RepoVersion> latest() const;

private:
    std::filesystem::path dir_;
    Clock clock_;
};

inline RepoVersion repo_commit(const std::filesystem::path& dir, const Document& doc) {
    return Repository(dir).commit(doc);
}
inline Document repo_load(const std::filesystem::path& dir, int version) { return Repository(dir).load(version); }

}  // namespace pbm
