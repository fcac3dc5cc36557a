#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"

namespace eit {

using json = nlohmann::json;

namespace io {

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline json read_json(const std::filesystem::path& path) {
    try {
        return json::parse(read_text(path));
    } catch (const json::parse_error& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

/// Writes to a sibling temporary file and renames it over the target, so
/// readers never observe a partially written result.
inline void write_atomic(const std::filesystem::path& path, const std::string& contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << contents;
        out.flush();
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline void write_json(const std::filesystem::path& path, const json& j) {
    write_atomic(path, j.dump(1) + "\n");
}

/// Checked accessor: throws IoError naming the missing key.
inline const json& require(const json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) throw IoError(std::string("missing key '") + key + "'");
    return j.at(key);
}

template <typename T>
std::vector<T> to_vector(const json& j, const char* what) {
    try {
        return j.get<std::vector<T>>();
    } catch (const json::exception& e) {
        throw IoError(std::string(what) + ": " + e.what());
    }
}

/// Little binary container for checkpoints: tagged blocks of raw doubles,
/// integers and strings, written in native byte order.
class BinaryWriter {
public:
    void put_u64(std::uint64_t v) { append(&v, sizeof v); }
    void put_f64(double v) { append(&v, sizeof v); }
    void put_string(const std::string& s) {
        put_u64(s.size());
        append(s.data(), s.size());
    }
    void put_doubles(const std::vector<double>& v) {
        put_u64(v.size());
        append(v.data(), v.size() * sizeof(double));
    }
    const std::string& bytes() const { return buf_; }

private:
    void append(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
    std::string buf_;
};

class BinaryReader {
public:
    explicit BinaryReader(std::string bytes) : buf_(std::move(bytes)) {}
    std::uint64_t get_u64() {
        std::uint64_t v;
        take(&v, sizeof v);
        return v;
    }
    double get_f64() {
        double v;
        take(&v, sizeof v);
        return v;
    }
    std::string get_string() {
        const auto n = get_u64();
        check(n);
        std::string s = buf_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::vector<double> get_doubles() {
        const auto n = get_u64();
        if (n > (buf_.size() - pos_) / sizeof(double)) throw IoError("checkpoint: truncated array");
        std::vector<double> v(n);
        take(v.data(), n * sizeof(double));
        return v;
    }
    /// Reads an array that must have the given length.
    void get_doubles_into(std::vector<double>& dst, const char* what) {
        auto v = get_doubles();
        if (v.size() != dst.size()) throw IoError(std::string("checkpoint: size mismatch for ") + what);
        dst = std::move(v);
    }
    bool done() const { return pos_ == buf_.size(); }

private:
    void check(std::size_t n) const {
        if (n > buf_.size() - pos_) throw IoError("checkpoint: truncated");
    }
    void take(void* p, std::size_t n) {
        check(n);
        std::memcpy(p, buf_.data() + pos_, n);
        pos_ += n;
    }
    std::string buf_;
    std::size_t pos_ = 0;
};

} // namespace io
} // namespace eit
