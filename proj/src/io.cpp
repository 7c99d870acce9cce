#include "asvlab/io.hpp"

#include "asvlab/error.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <memory>
#include <sstream>

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace asvlab::io {

std::array<char, 8> make_magic(const char (&text)[9]) {
    std::array<char, 8> m{};
    std::memcpy(m.data(), text, 8);
    return m;
}

namespace {

template <typename T>
void append(std::vector<char>& buf, T v) {
    char raw[sizeof(T)];
    std::memcpy(raw, &v, sizeof(T));
    buf.insert(buf.end(), raw, raw + sizeof(T));
}

}  // namespace

void BinaryWriter::header(const Header& h) {
    buffer_.insert(buffer_.end(), h.magic.begin(), h.magic.end());
    u32(h.version);
    u32(h.rows);
    u32(h.cols);
}

void BinaryWriter::u32(std::uint32_t v) { append(buffer_, v); }
void BinaryWriter::f32(float v) { append(buffer_, v); }
void BinaryWriter::f64(double v) { append(buffer_, v); }
void BinaryWriter::bytes(std::span<const char> data) { buffer_.insert(buffer_.end(), data.begin(), data.end()); }

void BinaryWriter::save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
    if (!out) {
        throw std::runtime_error("write failed: " + path.string());
    }
}

BinaryReader::BinaryReader(const std::filesystem::path& path) : origin_(path.string()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw LoadError("cannot open " + origin_);
    }
    data_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void BinaryReader::need(std::size_t n) {
    if (pos_ + n > data_.size()) {
        throw LoadError(origin_ + ": truncated file (needed " + std::to_string(n) + " bytes at offset " +
                        std::to_string(pos_) + ", size " + std::to_string(data_.size()) + ")");
    }
}

Header BinaryReader::header(const std::array<char, 8>& expected_magic, std::uint32_t expected_version) {
    need(kHeaderSize);
    Header h;
    std::memcpy(h.magic.data(), data_.data() + pos_, 8);
    pos_ += 8;
    if (h.magic != expected_magic) {
        throw LoadError(origin_ + ": bad magic, expected '" + std::string(expected_magic.data(), 7) + "'");
    }
    h.version = u32();
    if (h.version != expected_version) {
        throw LoadError(origin_ + ": unsupported version " + std::to_string(h.version) + " (expected " +
                        std::to_string(expected_version) + ")");
    }
    h.rows = u32();
    h.cols = u32();
    return h;
}

std::uint32_t BinaryReader::u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, data_.data() + pos_, 4);
    pos_ += 4;
    return v;
}

float BinaryReader::f32() {
    need(4);
    float v;
    std::memcpy(&v, data_.data() + pos_, 4);
    pos_ += 4;
    return v;
}

double BinaryReader::f64() {
    need(8);
    double v;
    std::memcpy(&v, data_.data() + pos_, 8);
    pos_ += 8;
    return v;
}

std::string BinaryReader::string(std::size_t n) {
    need(n);
    std::string s(data_.data() + pos_, n);
    pos_ += n;
    return s;
}

std::string sha256_hex(std::span<const char> data) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
        throw std::runtime_error("sha256 failed");
    }
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) {
        os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
    }
    return os.str();
}

std::string sha256_hex(std::span<const double> values) {
    return sha256_hex(std::span(reinterpret_cast<const char*>(values.data()), values.size_bytes()));
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw LoadError("cannot open " + path.string());
    }
    std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return sha256_hex(data);
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << j.dump(2) << '\n';
}

nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw LoadError("cannot open " + path.string());
    }
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(path.string() + ": " + e.what());
    }
}

}  // namespace asvlab::io
