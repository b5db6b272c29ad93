#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dcv::io {

// Ordered key=value record of a run. Entries added with set() feed the result
// hash; info() entries (timings, machine facts) are written but not hashed, so
// repeated runs with identical outputs produce identical hashes.
class Manifest {
public:
    void set(const std::string& key, const std::string& value);
    void set(const std::string& key, std::int64_t value);
    void set(const std::string& key, double value);
    void info(const std::string& key, const std::string& value);
    void info(const std::string& key, std::int64_t value);
    void info(const std::string& key, double value);

    std::uint64_t result_hash() const;
    // Writes all entries plus a trailing result_hash line.
    void write(const std::string& path) const;

    static std::string format_double(double v);

private:
    struct Entry {
        std::string key, value;
        bool hashed;
    };
    std::vector<Entry> entries_;
};

}  // namespace dcv::io
