#include "pbm/repo.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pbm/error.hpp"

namespace pbm {
namespace fs = std::filesystem;

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string fnv1a64_hex(std::string_view bytes) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
    return buf;
}

std::int64_t system_now() {
    using namespace std::chrono;
    return duration_cast<seconds>(system_clock::now().time_since_epoch()).count();
}

namespace {

constexpr const char* kManifest = "manifest";

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, std::string_view bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + p.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    if (!out) throw IoError("cannot write " + p.string());
}

// Writes to a sibling temp file and renames it into place, so readers never
// observe a partial file.
void replace_file(const fs::path& p, std::string_view bytes) {
    fs::path tmp = p;
    tmp += ".tmp";
    write_file(tmp, bytes);
    std::error_code ec;
    fs::rename(tmp, p, ec);
    if (ec) throw IoError("cannot replace " + p.string() + ": " + ec.message());
}

template <typename T>
bool to_number(std::string_view s, T& out) {
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return !s.empty() && ec == std::errc{} && ptr == s.data() + s.size();
}

std::string file_name(int version) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "v%04d.pbm", version);
    return buf;
}

std::vector<RepoVersion> read_manifest(const fs::path& dir) {
    std::vector<RepoVersion> out;
    fs::path p = dir / kManifest;
    if (!fs::exists(p)) return out;
    std::string text = read_file(p);
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto bad = [&](const std::string& why) {
            return RepoError("manifest line " + std::to_string(line_no) + ": " + why);
        };
        std::vector<std::string_view> f;
        std::string_view rest = line;
        for (;;) {
            auto tab = rest.find('\t');
            f.push_back(rest.substr(0, tab));
            if (tab == std::string_view::npos) break;
            rest.remove_prefix(tab + 1);
        }
        if (f.size() != 4) throw bad("expected 4 tab-separated fields");
        RepoVersion v;
        if (!to_number(f[0], v.version) || v.version < 1) throw bad("bad version");
        if (!to_number(f[1], v.created)) throw bad("bad timestamp");
        if (f[2].size() != 16) throw bad("bad checksum");
        v.checksum = f[2];
        v.path = f[3];
        if (v.version != static_cast<int>(out.size()) + 1) throw bad("versions are not consecutive");
        if (v.path != file_name(v.version)) throw bad("unexpected file name " + v.path);
        out.push_back(std::move(v));
    }
    return out;
}

std::string format_manifest(const std::vector<RepoVersion>& versions) {
    std::string out;
    for (const auto& v : versions) {
        out += std::to_string(v.version) + "\t" + std::to_string(v.created) + "\t" + v.checksum + "\t" + v.path + "\n";
    }
    return out;
}

}  // namespace

Repository::Repository(fs::path dir, Clock clock) : dir_(std::move(dir)), clock_(std::move(clock)) {}

RepoVersion Repository::commit(const Document& doc) {
    std::error_code ec;
    if (!fs::is_directory(dir_, ec)) throw IoError("repository directory " + dir_.string() + " does not exist");
    auto versions = read_manifest(dir_);
    RepoVersion v;
    v.version = static_cast<int>(versions.size()) + 1;
    v.created = clock_();
    v.path = file_name(v.version);
    fs::path file = dir_ / v.path;
    if (fs::exists(file)) throw RepoError("refusing to overwrite existing " + file.string());

    std::string text = serialize(doc);
    v.checksum = fnv1a64_hex(text);
    replace_file(file, text);
    if (fnv1a64_hex(read_file(file)) != v.checksum) {
        throw RepoError("checksum mismatch reading back " + file.string());
    }
    versions.push_back(v);
    replace_file(dir_ / kManifest, format_manifest(versions));
    return v;
}

std::string Repository::load_text(int version) const {
    auto versions = read_manifest(dir_);
    if (version < 1 || version > static_cast<int>(versions.size())) {
        throw RepoError("unknown version " + std::to_string(version));
    }
    const auto& v = versions[static_cast<std::size_t>(version - 1)];
    std::string text = read_file(dir_ / v.path);
    if (fnv1a64_hex(text) != v.checksum) {
        throw RepoError("checksum mismatch for version " + std::to_string(version) + " (" + v.path + ")");
    }
    return text;
}

Document Repository::load(int version) const { return parse(load_text(version)); }

std::vector<RepoVersion> Repository::log() const { return read_manifest(dir_); }

std::optional<RepoVersion> Repository::latest() const {
    auto versions = read_manifest(dir_);
    if (versions.empty()) return std::nullopt;
    return versions.back();
}

}  // namespace pbm
