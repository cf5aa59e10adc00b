// Copyright 2026 The refusal-forge Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "rforge/npy.hpp"

#include "rforge/error.hpp"

#include <atomic>
#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <string>
#include <system_error>

#include <unistd.h>

namespace rforge {

static_assert(std::endian::native == std::endian::little, "NPY payloads are read and written as host-order bytes");

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[] = "\x93NUMPY";
constexpr std::size_t kMagicLen = 6;
constexpr std::size_t kPreambleLen = 10; // magic + 2 version bytes + uint16 header length
constexpr std::size_t kAlign = 64;
constexpr std::size_t kGrowthAxisDigits = 21;

std::string context(const fs::path& path, std::string_view what)
{
    return path.string() + ": " + std::string(what);
}

std::size_t item_size(Dtype dtype)
{
    return dtype == Dtype::f32 ? 4 : 8;
}

std::string_view descr(Dtype dtype)
{
    return dtype == Dtype::f32 ? "<f4" : "<f8";
}

struct Header {
    std::string descr;
    bool fortran_order = false;
    std::vector<std::size_t> shape;
};

class HeaderParser {
public:
    explicit HeaderParser(std::string_view text) : text_(text) {}

    Header parse()
    {
        Header h;
        bool seen_descr = false;
        bool seen_order = false;
        bool seen_shape = false;
        expect('{');
        while (true) {
            skip_ws();
            if (peek() == '}') {
                ++pos_;
                break;
            }
            const std::string key = quoted();
            expect(':');
            if (key == "descr") {
                h.descr = quoted();
                seen_descr = true;
            } else if (key == "fortran_order") {
                h.fortran_order = boolean();
                seen_order = true;
            } else if (key == "shape") {
                h.shape = tuple();
                seen_shape = true;
            } else {
                throw FormatError("unexpected header key '" + key + "'");
            }
            skip_ws();
            if (peek() == ',') {
                ++pos_;
            }
        }
        if (!seen_descr || !seen_order || !seen_shape) {
            throw FormatError("header is missing descr, fortran_order or shape");
        }
        return h;
    }

private:
    char peek() const
    {
        if (pos_ >= text_.size()) {
            throw FormatError("header ended early");
        }
        return text_[pos_];
    }

    void skip_ws()
    {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
            ++pos_;
        }
    }

    void expect(char c)
    {
        skip_ws();
        if (peek() != c) {
            throw FormatError(std::string("expected '") + c + "' in header");
        }
        ++pos_;
    }

    std::string quoted()
    {
        skip_ws();
        const char q = peek();
        if (q != '\'' && q != '"') {
            throw FormatError("expected quoted string in header");
        }
        ++pos_;
        const std::size_t end = text_.find(q, pos_);
        if (end == std::string_view::npos) {
            throw FormatError("unterminated string in header");
        }
        std::string out(text_.substr(pos_, end - pos_));
        pos_ = end + 1;
        return out;
    }

    bool boolean()
    {
        skip_ws();
        if (text_.substr(pos_, 4) == "True") {
            pos_ += 4;
            return true;
        }
        if (text_.substr(pos_, 5) == "False") {
            pos_ += 5;
            return false;
        }
        throw FormatError("fortran_order must be True or False");
    }

    std::vector<std::size_t> tuple()
    {
        std::vector<std::size_t> dims;
        expect('(');
        while (true) {
            skip_ws();
            if (peek() == ')') {
                ++pos_;
                return dims;
            }
            if (!std::isdigit(static_cast<unsigned char>(peek()))) {
                throw FormatError("shape entries must be non-negative integers");
            }
            std::size_t value = 0;
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
                value = value * 10 + static_cast<std::size_t>(text_[pos_] - '0');
                ++pos_;
            }
            dims.push_back(value);
            skip_ws();
            if (peek() == ',') {
                ++pos_;
            }
        }
    }

    std::string_view text_;
    std::size_t pos_ = 0;
};

std::string shape_repr(const std::vector<std::size_t>& shape)
{
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) {
            s += ", ";
        }
        s += std::to_string(shape[i]);
    }
    if (shape.size() == 1) {
        s += ",";
    }
    s += ")";
    return s;
}

} // namespace

std::string_view to_string(Dtype dtype)
{
    return dtype == Dtype::f32 ? "f32" : "f64";
}

Dtype dtype_from_string(std::string_view name)
{
    if (name == "f32") {
        return Dtype::f32;
    }
    if (name == "f64") {
        return Dtype::f64;
    }
    throw DomainError("dtype: expected f32 or f64, got '" + std::string(name) + "'");
}

NpyArray read_npy(const fs::path& path, const ReadOptions& opts)
{
    std::error_code ec;
    const auto size = fs::file_size(path, ec);
    if (ec) {
        throw IoError(context(path, "cannot stat file: " + ec.message()));
    }
    if (size > opts.max_bytes) {
        throw IoError(context(path, "file of " + std::to_string(size) + " bytes exceeds size cap of " +
                                        std::to_string(opts.max_bytes)));
    }

    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError(context(path, "cannot open for reading"));
    }
    std::string bytes(static_cast<std::size_t>(size), '\0');
    in.read(bytes.data(), static_cast<std::streamsize>(size));
    if (static_cast<std::uintmax_t>(in.gcount()) != size) {
        throw IoError(context(path, "short read"));
    }

    if (bytes.size() < kPreambleLen || std::memcmp(bytes.data(), kMagic, kMagicLen) != 0) {
        throw FormatError(context(path, "not NPY (bad magic or truncated preamble)"));
    }
    if (bytes[6] != 1 || bytes[7] != 0) {
        throw FormatError(context(path, "not NPY v1.0 (version " + std::to_string(int(bytes[6])) + "." +
                                            std::to_string(int(bytes[7])) + ")"));
    }
    const std::size_t header_len =
        static_cast<unsigned char>(bytes[8]) | (static_cast<std::size_t>(static_cast<unsigned char>(bytes[9])) << 8);
    if (bytes.size() < kPreambleLen + header_len) {
        throw FormatError(context(path, "not NPY (truncated header)"));
    }

    Header header;
    try {
        header = HeaderParser(std::string_view(bytes).substr(kPreambleLen, header_len)).parse();
    } catch (const FormatError& e) {
        throw FormatError(context(path, std::string("not NPY (") + e.what() + ")"));
    }

    NpyArray out;
    if (header.descr == "<f8") {
        out.dtype = Dtype::f64;
    } else if (header.descr == "<f4") {
        out.dtype = Dtype::f32;
    } else {
        throw FormatError(context(path, "unsupported dtype '" + header.descr + "' (expected <f4 or <f8)"));
    }
    if (header.fortran_order) {
        throw FormatError(context(path, "unsupported layout: fortran_order is True"));
    }
    if (header.shape.empty() || header.shape.size() > 2) {
        throw FormatError(context(path, "unsupported rank " + std::to_string(header.shape.size()) +
                                            " (expected 1 or 2)"));
    }
    out.shape = header.shape;

    const std::size_t rows = header.shape.size() == 2 ? header.shape[0] : 1;
    const std::size_t cols = header.shape.back();
    const std::size_t count = rows * cols;
    const std::size_t payload = count * item_size(out.dtype);
    if (bytes.size() - kPreambleLen - header_len != payload) {
        throw FormatError(context(path, "payload is " + std::to_string(bytes.size() - kPreambleLen - header_len) +
                                            " bytes, header implies " + std::to_string(payload)));
    }

    const char* data = bytes.data() + kPreambleLen + header_len;
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    RowMajor m(static_cast<Index>(rows), static_cast<Index>(cols));
    if (out.dtype == Dtype::f64) {
        std::memcpy(m.data(), data, payload);
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            float f = 0.0f;
            std::memcpy(&f, data + i * 4, 4);
            m.data()[i] = static_cast<double>(f);
        }
    }
    if (!m.allFinite()) {
        throw FormatError(context(path, "non-finite entry in payload"));
    }
    out.data = m;
    return out;
}

Matrix read_tensor(const fs::path& path, const ReadOptions& opts)
{
    return read_npy(path, opts).data;
}

Vector read_vector(const fs::path& path, const ReadOptions& opts)
{
    const Matrix m = read_tensor(path, opts);
    if (m.rows() == 1) {
        return m.row(0).transpose();
    }
    if (m.cols() == 1) {
        return m.col(0);
    }
    throw FormatError(context(path, "expected a vector, found " + std::to_string(m.rows()) + "x" +
                                        std::to_string(m.cols())));
}

std::vector<char> encode_npy(const std::vector<std::size_t>& shape, const double* data, Dtype dtype)
{
    std::string header = "{'descr': '" + std::string(descr(dtype)) +
                         "', 'fortran_order': False, 'shape': " + shape_repr(shape) + ", }";
    // numpy reserves room to grow the leading axis in place
    const std::size_t lead_digits = std::to_string(shape.empty() ? 0 : shape.front()).size();
    if (!shape.empty() && lead_digits < kGrowthAxisDigits) {
        header.append(kGrowthAxisDigits - lead_digits, ' ');
    }
    // numpy pads with spaces so the payload starts on a 64-byte boundary,
    // terminating with a newline; an already-aligned header still gets a full block
    const std::size_t pad = kAlign - ((kPreambleLen + header.size() + 1) % kAlign);
    header.append(pad, ' ');
    header.push_back('\n');
    if (header.size() > 0xFFFF) {
        throw FormatError("shape too large for an NPY v1.0 header");
    }

    std::size_t count = 1;
    for (const auto d : shape) {
        count *= d;
    }

    std::vector<char> out;
    out.reserve(kPreambleLen + header.size() + count * item_size(dtype));
    out.insert(out.end(), kMagic, kMagic + kMagicLen);
    out.push_back(1);
    out.push_back(0);
    out.push_back(static_cast<char>(header.size() & 0xFF));
    out.push_back(static_cast<char>((header.size() >> 8) & 0xFF));
    out.insert(out.end(), header.begin(), header.end());

    const std::size_t offset = out.size();
    out.resize(offset + count * item_size(dtype));
    if (dtype == Dtype::f64) {
        std::memcpy(out.data() + offset, data, count * 8);
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            const float f = static_cast<float>(data[i]);
            std::memcpy(out.data() + offset + i * 4, &f, 4);
        }
    }
    return out;
}

void write_file_atomic(const fs::path& path, std::string_view bytes)
{
    static std::atomic<unsigned> counter{0};
    fs::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter.fetch_add(1));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError(context(path, "cannot open for writing"));
        }
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) {
            std::error_code ignored;
            fs::remove(tmp, ignored);
            throw IoError(context(path, "write failed"));
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        std::error_code ignored;
        fs::remove(tmp, ignored);
        throw IoError(context(path, "rename failed: " + ec.message()));
    }
}

void write_tensor(const fs::path& path, const Matrix& m, Dtype dtype)
{
    require_finite(m, path.string());
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const RowMajor rm = m;
    const auto bytes = encode_npy({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                                  rm.data(), dtype);
    write_file_atomic(path, std::string_view(bytes.data(), bytes.size()));
}

void write_vector(const fs::path& path, const Vector& v, Dtype dtype)
{
    require_finite(v, path.string());
    const auto bytes = encode_npy({static_cast<std::size_t>(v.size())}, v.data(), dtype);
    write_file_atomic(path, std::string_view(bytes.data(), bytes.size()));
}

} // namespace rforge
