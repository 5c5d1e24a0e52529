#pragma once

#include "cvak/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

namespace cvak::io {

/// Little-endian byte sink, independent of host byte order.
class ByteWriter {
public:
    void magic(std::string_view m) { bytes_.insert(bytes_.end(), m.begin(), m.end()); }

    void u32(std::uint32_t v)
    {
        for (int i = 0; i < 4; ++i) {
            bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
        }
    }

    void u64(std::uint64_t v)
    {
        for (int i = 0; i < 8; ++i) {
            bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
        }
    }

    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

    [[nodiscard]] const std::vector<char>& bytes() const noexcept { return bytes_; }

    void write_file(const std::string& path) const
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw FormatError(FormatError::Code::io, "cannot open '" + path + "' for writing");
        }
        out.write(bytes_.data(), static_cast<std::streamsize>(bytes_.size()));
        if (!out) {
            throw FormatError(FormatError::Code::io, "write failed for '" + path + "'");
        }
    }

private:
    std::vector<char> bytes_;
};

class ByteReader {
public:
    explicit ByteReader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

    static ByteReader from_file(const std::string& path)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            throw FormatError(FormatError::Code::io, "cannot open '" + path + "'");
        }
        return ByteReader(std::vector<char>(std::istreambuf_iterator<char>(in), {}));
    }

    void expect_magic(std::string_view m)
    {
        need(m.size(), "magic");
        if (std::string_view(bytes_.data() + pos_, m.size()) != m) {
            throw FormatError(FormatError::Code::bad_magic, "bad magic: expected '" + std::string(m) + "'");
        }
        pos_ += m.size();
    }

    std::uint32_t u32(const char* what)
    {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += 4;
        return v;
    }

    std::uint64_t u64(const char* what)
    {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += 8;
        return v;
    }

    double f64(const char* what) { return std::bit_cast<double>(u64(what)); }

    void expect_end() const
    {
        if (pos_ != bytes_.size()) {
            throw FormatError(FormatError::Code::bad_value,
                              std::to_string(bytes_.size() - pos_) + " trailing bytes after payload");
        }
    }

    [[nodiscard]] std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

private:
    void need(std::size_t n, const char* what) const
    {
        if (bytes_.size() - pos_ < n) {
            throw FormatError(FormatError::Code::truncated, std::string("truncated file while reading ") + what);
        }
    }

    std::vector<char> bytes_;
    std::size_t pos_ = 0;
};

} // namespace cvak::io
