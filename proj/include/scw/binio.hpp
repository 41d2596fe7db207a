#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace scw::io {

// Little-endian binary file helpers. Readers track the byte offset so parse
// errors can report where the file went bad.

class Writer {
  public:
    explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw std::runtime_error("cannot open " + path + " for writing");
        path_ = path;
    }
    void u8(uint8_t v) { raw(&v, 1); }
    void u32(uint32_t v) {
        uint8_t b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
        raw(b, 4);
    }
    void i32(int32_t v) { u32(static_cast<uint32_t>(v)); }
    void f64(double v) {
        uint64_t u;
        std::memcpy(&u, &v, 8);
        uint8_t b[8];
        for (int i = 0; i < 8; ++i) b[i] = uint8_t(u >> (8 * i));
        raw(b, 8);
    }
    void f64s(const double* v, size_t n) {
        for (size_t i = 0; i < n; ++i) f64(v[i]);
    }
    void bytes(const uint8_t* v, size_t n) { raw(v, n); }
    void str(const std::string& s) {
        u32(static_cast<uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
    void close() {
        out_.close();
        if (!out_.good()) throw std::runtime_error("write to " + path_ + " failed");
    }

  private:
    void raw(const void* p, size_t n) {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        if (!out_) throw std::runtime_error("write to " + path_ + " failed");
    }
    std::ofstream out_;
    std::string path_;
};

class Reader {
  public:
    explicit Reader(const std::string& path) : path_(path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open " + path);
        buf_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    size_t offset() const { return off_; }
    size_t remaining() const { return buf_.size() - off_; }
    bool eof() const { return off_ == buf_.size(); }

    uint8_t u8() {
        need(1);
        return static_cast<uint8_t>(buf_[off_++]);
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(uint8_t(buf_[off_ + i])) << (8 * i);
        off_ += 4;
        return v;
    }
    int32_t i32() { return static_cast<int32_t>(u32()); }
    double f64() {
        need(8);
        uint64_t u = 0;
        for (int i = 0; i < 8; ++i) u |= uint64_t(uint8_t(buf_[off_ + i])) << (8 * i);
        off_ += 8;
        double v;
        std::memcpy(&v, &u, 8);
        return v;
    }
    void f64s(double* v, size_t n) {
        for (size_t i = 0; i < n; ++i) v[i] = f64();
    }
    void bytes(uint8_t* v, size_t n) {
        need(n);
        std::memcpy(v, buf_.data() + off_, n);
        off_ += n;
    }
    std::string str() {
        const uint32_t n = u32();
        need(n);
        std::string s(buf_.data() + off_, n);
        off_ += n;
        return s;
    }
    [[noreturn]] void fail(const std::string& what) const {
        throw std::runtime_error(path_ + ": " + what + " at byte offset " +
                                 std::to_string(off_));
    }

  private:
    void need(size_t n) const {
        if (off_ + n > buf_.size())
            throw std::runtime_error(path_ + ": truncated file, needed " + std::to_string(n) +
                                     " bytes at offset " + std::to_string(off_));
    }
    std::string path_;
    std::vector<char> buf_;
    size_t off_ = 0;
};

}  // namespace scw::io
