#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace lrx {

// Shortest round-trip decimal form via std::to_chars; '.' decimal point, no
// locale dependence.
std::string format_double(double v);

// Line-oriented key=value files; '#' starts a comment, blank lines ignored.
// Later occurrences of a key override earlier ones.
class KeyValueConfig {
public:
    static KeyValueConfig parse(const std::string& text);
    static KeyValueConfig load(const std::string& path);

    bool has(const std::string& key) const;
    std::string get_string(const std::string& key) const;
    std::string get_string_or(const std::string& key, const std::string& fallback) const;
    std::uint64_t get_u64(const std::string& key) const;
    std::uint64_t get_u64_or(const std::string& key, std::uint64_t fallback) const;
    double get_double(const std::string& key) const;
    double get_double_or(const std::string& key, double fallback) const;
    void set(const std::string& key, const std::string& value);

    const std::map<std::string, std::string>& entries() const { return entries_; }

private:
    std::map<std::string, std::string> entries_;
};

// Binary P5 PGM with maxval 255; pixels row-major.
void write_pgm(std::ostream& os, std::size_t width, std::size_t height,
               const std::vector<std::uint8_t>& pixels);

// SHA-1 digest as lowercase hex (used for manifest content hashes).
std::string sha1_hex(const std::string& data);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

} // namespace lrx
