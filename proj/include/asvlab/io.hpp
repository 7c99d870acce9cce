// Binary file helpers and content hashing.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace asvlab::io {

/// Common 20-byte header: 8-byte magic, u32 version, u32 rows, u32 cols.
/// All integers and floats are little-endian.
struct Header {
    std::array<char, 8> magic{};
    std::uint32_t version = 0;
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
};

inline constexpr std::size_t kHeaderSize = 20;

std::array<char, 8> make_magic(const char (&text)[9]);

class BinaryWriter {
public:
    void header(const Header& h);
    void u32(std::uint32_t v);
    void f32(float v);
    void f64(double v);
    void bytes(std::span<const char> data);
    const std::vector<char>& buffer() const { return buffer_; }
    void save(const std::filesystem::path& path) const;

private:
    std::vector<char> buffer_;
};

class BinaryReader {
public:
    /// Throws LoadError when the file cannot be read.
    explicit BinaryReader(const std::filesystem::path& path);

    /// Throws LoadError on magic / version mismatch.
    Header header(const std::array<char, 8>& expected_magic, std::uint32_t expected_version);
    std::uint32_t u32();
    float f32();
    double f64();
    std::string string(std::size_t n);
    std::size_t remaining() const { return data_.size() - pos_; }

private:
    void need(std::size_t n);
    std::vector<char> data_;
    std::size_t pos_ = 0;
    std::string origin_;
};

std::string sha256_hex(std::span<const char> data);
std::string sha256_hex(std::span<const double> values);
std::string sha256_file(const std::filesystem::path& path);

/// Pretty JSON with a trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
/// Throws LoadError with the path in the message.
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace asvlab::io
