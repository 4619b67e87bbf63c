#include "htp/io.hpp"

#include <bit>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts unsupported");

namespace htp {

void KvMap::set(const std::string& key, const std::string& value) {
    for (auto& e : entries_)
        if (e.first == key) {
            e.second = value;
            return;
        }
    entries_.emplace_back(key, value);
}

void KvMap::erase(const std::string& key) {
    std::erase_if(entries_, [&](const auto& e) { return e.first == key; });
}

void KvMap::set(const std::string& key, double value) { set(key, format_double(value)); }
void KvMap::set(const std::string& key, long long value) { set(key, std::to_string(value)); }

bool KvMap::has(const std::string& key) const {
    for (const auto& e : entries_)
        if (e.first == key) return true;
    return false;
}

const std::string& KvMap::get(const std::string& key) const {
    for (const auto& e : entries_)
        if (e.first == key) return e.second;
    throw std::runtime_error("KvMap: missing key '" + key + "'");
}

std::string KvMap::get_or(const std::string& key, const std::string& fallback) const {
    return has(key) ? get(key) : fallback;
}

double KvMap::get_double(const std::string& key) const { return std::stod(get(key)); }
long long KvMap::get_int(const std::string& key) const { return std::stoll(get(key)); }
double KvMap::get_double_or(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}
long long KvMap::get_int_or(const std::string& key, long long fallback) const {
    return has(key) ? get_int(key) : fallback;
}

std::string KvMap::serialize() const {
    std::string out;
    for (const auto& e : entries_) {
        out += e.first;
        out += " = ";
        out += e.second;
        out += '\n';
    }
    return out;
}

KvMap KvMap::parse(const std::string& text) {
    KvMap kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto pos = line.find(" = ");
        if (pos == std::string::npos)
            throw std::runtime_error("KvMap: malformed line '" + line + "'");
        kv.entries_.emplace_back(line.substr(0, pos), line.substr(pos + 3));
    }
    return kv;
}

KvMap KvMap::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("KvMap: cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
}

void KvMap::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("KvMap: cannot write " + path);
    f << serialize();
}

void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
}
void write_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), 8);
}
void write_string(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    if (!is) throw std::runtime_error("binary read: truncated file (u32)");
    return v;
}
std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 8);
    if (!is) throw std::runtime_error("binary read: truncated file (u64)");
    return v;
}
std::string read_string(std::istream& is) {
    const std::uint32_t n = read_u32(is);
    if (n > (1u << 20)) throw std::runtime_error("binary read: implausible string length");
    std::string s(n, '\0');
    is.read(s.data(), n);
    if (!is) throw std::runtime_error("binary read: truncated file (string)");
    return s;
}

std::string format_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, p);
}

}  // namespace htp
