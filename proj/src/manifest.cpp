#include "dcv/io/manifest.hpp"

#include <cstdio>
#include <stdexcept>

namespace dcv::io {

std::string Manifest::format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void Manifest::set(const std::string& key, const std::string& value) {
    entries_.push_back({key, value, true});
}
void Manifest::set(const std::string& key, std::int64_t value) {
    set(key, std::to_string(value));
}
void Manifest::set(const std::string& key, double value) {
    set(key, format_double(value));
}
void Manifest::info(const std::string& key, const std::string& value) {
    entries_.push_back({key, value, false});
}
void Manifest::info(const std::string& key, std::int64_t value) {
    info(key, std::to_string(value));
}
void Manifest::info(const std::string& key, double value) {
    info(key, format_double(value));
}

std::uint64_t Manifest::result_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto feed = [&h](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ull;
        }
    };
    for (const auto& e : entries_) {
        if (!e.hashed) continue;
        feed(e.key);
        feed("=");
        feed(e.value);
        feed("\n");
    }
    return h;
}

void Manifest::write(const std::string& path) const {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    for (const auto& e : entries_) std::fprintf(f, "%s=%s\n", e.key.c_str(), e.value.c_str());
    std::fprintf(f, "result_hash=%016llx\n", static_cast<unsigned long long>(result_hash()));
    std::fclose(f);
}

}  // namespace dcv::io
