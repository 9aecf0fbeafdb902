#pragma once

#include <bit>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "falcon/analysis.hpp"
#include "falcon/errors.hpp"
#include "falcon/tensor.hpp"

namespace falcon {

/// Scalar encodings of the tensor container.  Single precision widens to
/// double on read; on write doubles round to nearest, ties to even.
enum class FtkDtype : std::uint8_t { f32 = 0, f64 = 1 };

struct NamedTensor {
    std::string name;
    Tensor value;
};

inline const Tensor* find_tensor(const std::vector<NamedTensor>& tensors,
                                 const std::string& name) {
    for (const NamedTensor& t : tensors)
        if (t.name == name)
            return &t.value;
    return nullptr;
}

namespace detail {

constexpr char ftk_magic[8] = {'F', 'A', 'L', 'C', 'O', 'N', 'T', 'K'};
constexpr std::uint32_t ftk_version = 1;

struct ByteReader {
    const std::vector<unsigned char>& bytes;
    std::size_t pos = 0;

    void need(std::size_t count, const char* what) const {
        if (pos + count > bytes.size())
            throw format_error("truncated file: " + std::string(what) + " needs " +
                               std::to_string(count) + " bytes at offset " +
                               std::to_string(pos) + ", file has " +
                               std::to_string(bytes.size() - pos) + " left");
    }

    std::uint8_t u8(const char* what) {
        need(1, what);
        return bytes[pos++];
    }

    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (std::size_t b = 0; b < 4; ++b)
            v |= static_cast<std::uint32_t>(bytes[pos + b]) << (8 * b);
        pos += 4;
        return v;
    }

    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (std::size_t b = 0; b < 8; ++b)
            v |= static_cast<std::uint64_t>(bytes[pos + b]) << (8 * b);
        pos += 8;
        return v;
    }

    std::string str(std::size_t len, const char* what) {
        need(len, what);
        std::string s(reinterpret_cast<const char*>(bytes.data() + pos), len);
        pos += len;
        return s;
    }
};

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (std::size_t b = 0; b < 4; ++b)
        out.push_back(static_cast<unsigned char>((v >> (8 * b)) & 0xff));
}

inline void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
    for (std::size_t b = 0; b < 8; ++b)
        out.push_back(static_cast<unsigned char>((v >> (8 * b)) & 0xff));
}

} // namespace detail

/// Parses a tensor container from memory.  Layout: 8-byte magic "FALCONTK",
/// u32 version (1), u8 dtype, u32 tensor count, then per tensor a u32 name
/// length, the name, a u32 axis count, u32 extents, and the row-major
/// little-endian payload.
inline std::vector<NamedTensor> read_ftk_bytes(const std::vector<unsigned char>& bytes) {
    detail::ByteReader r{bytes};
    r.need(8, "magic");
    for (std::size_t b = 0; b < 8; ++b)
        if (static_cast<char>(bytes[b]) != detail::ftk_magic[b])
            throw format_error("bad magic at offset 0: expected \"FALCONTK\"");
    r.pos = 8;

    const std::uint32_t version = r.u32("version");
    if (version != detail::ftk_version)
        throw format_error("unsupported version " + std::to_string(version) + " at offset 8");
    const std::uint8_t dtype = r.u8("dtype");
    if (dtype > 1)
        throw format_error("unknown dtype " + std::to_string(dtype) + " at offset 12");
    const std::uint32_t count = r.u32("tensor count");

    std::vector<NamedTensor> tensors;
    std::unordered_set<std::string> seen;
    for (std::uint32_t ti = 0; ti < count; ++ti) {
        const std::uint32_t name_len = r.u32("name length");
        std::string name = r.str(name_len, "name");
        if (!seen.insert(name).second)
            throw format_error("duplicate tensor name '" + name + "'");
        const std::uint32_t ndim = r.u32("axis count");
        if (ndim == 0)
            throw format_error("tensor '" + name + "' has no axes");
        std::vector<std::size_t> shape(ndim);
        std::size_t total = 1;
        for (std::uint32_t a = 0; a < ndim; ++a) {
            const std::uint32_t e = r.u32("extent");
            if (e == 0)
                throw format_error("tensor '" + name + "' has extent 0 on axis " +
                                   std::to_string(a));
            shape[a] = e;
            total *= e;
        }
        std::vector<double> data(total);
        if (dtype == static_cast<std::uint8_t>(FtkDtype::f64)) {
            for (std::size_t q = 0; q < total; ++q)
                data[q] = std::bit_cast<double>(r.u64("payload"));
        } else {
            for (std::size_t q = 0; q < total; ++q)
                data[q] = static_cast<double>(
                    std::bit_cast<float>(r.u32("payload")));
        }
        tensors.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
    }
    if (r.pos != bytes.size())
        throw format_error("unexpected trailing bytes at offset " + std::to_string(r.pos));
    return tensors;
}

inline std::vector<unsigned char> write_ftk_bytes(const std::vector<NamedTensor>& tensors,
                                                  FtkDtype dtype = FtkDtype::f64) {
    std::unordered_set<std::string> seen;
    for (const NamedTensor& t : tensors) {
        if (!seen.insert(t.name).second)
            throw format_error("duplicate tensor name '" + t.name + "'");
        for (std::size_t a = 0; a < t.value.ndim(); ++a)
            if (t.value.extent(a) > 0xffffffffull)
                throw format_error("tensor '" + t.name + "' extent exceeds the format limit");
    }
    if (tensors.size() > 0xffffffffull)
        throw format_error("too many tensors for the format");

    std::vector<unsigned char> out;
    out.insert(out.end(), detail::ftk_magic, detail::ftk_magic + 8);
    detail::put_u32(out, detail::ftk_version);
    out.push_back(static_cast<unsigned char>(dtype));
    detail::put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const NamedTensor& t : tensors) {
        detail::put_u32(out, static_cast<std::uint32_t>(t.name.size()));
        out.insert(out.end(), t.name.begin(), t.name.end());
        detail::put_u32(out, static_cast<std::uint32_t>(t.value.ndim()));
        for (std::size_t a = 0; a < t.value.ndim(); ++a)
            detail::put_u32(out, static_cast<std::uint32_t>(t.value.extent(a)));
        if (dtype == FtkDtype::f64) {
            for (std::size_t q = 0; q < t.value.size(); ++q)
                detail::put_u64(out, std::bit_cast<std::uint64_t>(t.value[q]));
        } else {
            for (std::size_t q = 0; q < t.value.size(); ++q)
                detail::put_u32(out, std::bit_cast<std::uint32_t>(
                                         static_cast<float>(t.value[q])));
        }
    }
    return out;
}

inline std::vector<NamedTensor> read_ftk(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw format_error("cannot open '" + path + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return read_ftk_bytes(bytes);
}

inline void write_ftk(const std::string& path, const std::vector<NamedTensor>& tensors,
                      FtkDtype dtype = FtkDtype::f64) {
    const std::vector<unsigned char> bytes = write_ftk_bytes(tensors, dtype);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw format_error("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw format_error("write to '" + path + "' failed");
}

namespace detail {

inline std::uint64_t parse_uint(const std::string& tok, const std::string& key,
                                std::size_t line_no) {
    std::uint64_t v = 0;
    const char* b = tok.data();
    const char* e = tok.data() + tok.size();
    const auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e)
        throw format_error("line " + std::to_string(line_no) + ": value '" + tok +
                           "' for key '" + key + "' is not a nonnegative integer");
    return v;
}

inline double parse_real(const std::string& tok, const std::string& key, std::size_t line_no) {
    double v = 0.0;
    const char* b = tok.data();
    const char* e = tok.data() + tok.size();
    const auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e)
        throw format_error("line " + std::to_string(line_no) + ": value '" + tok +
                           "' for key '" + key + "' is not a number");
    return v;
}

} // namespace detail

/// Parses an architecture description.  Each noncomment line reads
///   layer <name> conv=<type> D=<n> M=<n> N=<n> H=<n> W=<n> s=<n> p=<n>
/// with optional k=<rank>, t=<width multiplier>, g=<groups>.  '#' starts a
/// comment, blank lines are skipped, unknown or repeated keys are errors, and
/// every error names its line.
inline std::vector<LayerSpec> parse_arch_config(std::istream& in) {
    std::vector<LayerSpec> layers;
    std::unordered_set<std::string> names;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos)
            line.erase(hash);
        std::istringstream words(line);
        std::string word;
        if (!(words >> word))
            continue;
        if (word != "layer")
            throw format_error("line " + std::to_string(line_no) + ": expected 'layer', got '" +
                               word + "'");
        LayerSpec spec;
        if (!(words >> spec.name) || spec.name.find('=') != std::string::npos)
            throw format_error("line " + std::to_string(line_no) + ": missing layer name");
        if (!names.insert(spec.name).second)
            throw format_error("line " + std::to_string(line_no) + ": duplicate layer name '" +
                               spec.name + "'");

        std::unordered_set<std::string> keys;
        bool have_conv = false;
        while (words >> word) {
            const std::size_t eq = word.find('=');
            if (eq == std::string::npos || eq == 0 || eq + 1 >= word.size())
                throw format_error("line " + std::to_string(line_no) + ": expected key=value, got '" +
                                   word + "'");
            const std::string key = word.substr(0, eq);
            const std::string val = word.substr(eq + 1);
            if (!keys.insert(key).second)
                throw format_error("line " + std::to_string(line_no) + ": repeated key '" + key +
                                   "'");
            if (key == "conv") {
                try {
                    spec.conv.kind = conv_kind_from_string(val);
                } catch (const format_error& e) {
                    throw format_error("line " + std::to_string(line_no) + ": " + e.what());
                }
                have_conv = true;
            } else if (key == "D") {
                spec.dims.kernel_size = detail::parse_uint(val, key, line_no);
            } else if (key == "M") {
                spec.dims.in_channels = detail::parse_uint(val, key, line_no);
            } else if (key == "N") {
                spec.dims.out_channels = detail::parse_uint(val, key, line_no);
            } else if (key == "H") {
                spec.dims.in_height = detail::parse_uint(val, key, line_no);
            } else if (key == "W") {
                spec.dims.in_width = detail::parse_uint(val, key, line_no);
            } else if (key == "s") {
                spec.dims.stride = detail::parse_uint(val, key, line_no);
            } else if (key == "p") {
                spec.dims.padding = detail::parse_uint(val, key, line_no);
            } else if (key == "k") {
                spec.rank = detail::parse_uint(val, key, line_no);
                if (spec.rank < 1)
                    throw format_error("line " + std::to_string(line_no) + ": rank must be >= 1");
            } else if (key == "t") {
                spec.conv.expansion = detail::parse_real(val, key, line_no);
                if (!(spec.conv.expansion > 0.0))
                    throw format_error("line " + std::to_string(line_no) +
                                       ": width multiplier must be > 0");
            } else if (key == "g") {
                spec.conv.groups = detail::parse_uint(val, key, line_no);
                if (spec.conv.groups < 1)
                    throw format_error("line " + std::to_string(line_no) +
                                       ": group count must be >= 1");
            } else {
                throw format_error("line " + std::to_string(line_no) + ": unknown key '" + key +
                                   "'");
            }
        }
        for (const char* req : {"conv", "D", "M", "N", "H", "W", "s", "p"}) {
            if (req == std::string("conv") ? !have_conv : keys.count(req) == 0)
                throw format_error("line " + std::to_string(line_no) + ": missing key '" +
                                   std::string(req) + "'");
        }
        try {
            spec.dims.validate();
        } catch (const shape_error& e) {
            throw format_error("line " + std::to_string(line_no) + ": " + e.what());
        }
        layers.push_back(std::move(spec));
    }
    return layers;
}

inline std::vector<LayerSpec> parse_arch_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw format_error("cannot open '" + path + "'");
    return parse_arch_config(in);
}

} // namespace falcon
