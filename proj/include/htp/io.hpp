#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace htp {

// Canonical key-value text block: one "key = value" per line, keys unique,
// order fixed by the writer. Used for configs, manifests, and scene files.
class KvMap {
public:
    void set(const std::string& key, const std::string& value);
    void set(const std::string& key, double value);
    void set(const std::string& key, long long value);

    void erase(const std::string& key);

    bool has(const std::string& key) const;
    const std::string& get(const std::string& key) const;
    std::string get_or(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key) const;
    long long get_int(const std::string& key) const;
    double get_double_or(const std::string& key, double fallback) const;
    long long get_int_or(const std::string& key, long long fallback) const;

    std::string serialize() const;
    static KvMap parse(const std::string& text);
    static KvMap load(const std::string& path);
    void save(const std::string& path) const;

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

// Little-endian binary primitives (host is little-endian; asserted at startup).
void write_u32(std::ostream& os, std::uint32_t v);
void write_u64(std::ostream& os, std::uint64_t v);
void write_string(std::ostream& os, const std::string& s);
std::uint32_t read_u32(std::istream& is);
std::uint64_t read_u64(std::istream& is);
std::string read_string(std::istream& is);

std::string format_double(double v);  // shortest round-trip decimal

}  // namespace htp
