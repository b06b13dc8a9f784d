#include "mbfd/matfile.hpp"

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "mbfd/error.hpp"

namespace mbfd::mat {
namespace {

enum DataType : std::uint32_t {
    miINT8 = 1,
    miUINT8 = 2,
    miINT16 = 3,
    miUINT16 = 4,
    miINT32 = 5,
    miUINT32 = 6,
    miSINGLE = 7,
    miDOUBLE = 9,
    miINT64 = 12,
    miUINT64 = 13,
    miMATRIX = 14,
    miCOMPRESSED = 15,
    miUTF8 = 16,
    miUTF16 = 17,
    miUTF32 = 18,
};

struct Element {
    std::uint32_t type = 0;
    const std::uint8_t* data = nullptr;
    std::size_t size = 0;
};

class Cursor {
public:
    Cursor(const std::uint8_t* begin, std::size_t size) : p_(begin), end_(begin + size) {}

    bool done() const { return p_ >= end_; }

    Element next() {
        need(8);
        std::uint32_t first, second;
        std::memcpy(&first, p_, 4);
        std::memcpy(&second, p_ + 4, 4);
        Element e;
        if ((first >> 16) != 0) {
            // Small data element: 2-byte size, 2-byte type, 4 bytes payload.
            e.type = first & 0xFFFF;
            e.size = first >> 16;
            if (e.size > 4) throw FormatError("MAT: corrupt small data element");
            e.data = p_ + 4;
            p_ += 8;
            return e;
        }
        e.type = first;
        e.size = second;
        p_ += 8;
        need(e.size);
        e.data = p_;
        // miCOMPRESSED payloads are not padded; everything else is 8-byte aligned.
        const std::size_t padded = e.type == miCOMPRESSED ? e.size : (e.size + 7) / 8 * 8;
        p_ += std::min<std::size_t>(padded, static_cast<std::size_t>(end_ - p_));
        return e;
    }

private:
    void need(std::size_t n) const {
        if (static_cast<std::size_t>(end_ - p_) < n) throw FormatError("MAT: element runs past end of data");
    }
    const std::uint8_t* p_;
    const std::uint8_t* end_;
};

template <typename T>
void append_as_double(const Element& e, std::vector<double>& out) {
    const std::size_t n = e.size / sizeof(T);
    out.reserve(out.size() + n);
    for (std::size_t i = 0; i < n; ++i) {
        T v;
        std::memcpy(&v, e.data + i * sizeof(T), sizeof(T));
        out.push_back(static_cast<double>(v));
    }
}

std::vector<double> numeric_payload(const Element& e) {
    std::vector<double> out;
    switch (e.type) {
        case miINT8: append_as_double<std::int8_t>(e, out); break;
        case miUINT8: append_as_double<std::uint8_t>(e, out); break;
        case miINT16: append_as_double<std::int16_t>(e, out); break;
        case miUINT16: append_as_double<std::uint16_t>(e, out); break;
        case miINT32: append_as_double<std::int32_t>(e, out); break;
        case miUINT32: append_as_double<std::uint32_t>(e, out); break;
        case miSINGLE: append_as_double<float>(e, out); break;
        case miDOUBLE: append_as_double<double>(e, out); break;
        case miINT64: append_as_double<std::int64_t>(e, out); break;
        case miUINT64: append_as_double<std::uint64_t>(e, out); break;
        default: throw FormatError("MAT: unsupported numeric storage type " + std::to_string(e.type));
    }
    return out;
}

std::string char_payload(const Element& e) {
    std::string s;
    switch (e.type) {
        case miUTF8:
        case miUINT8:
        case miINT8: s.assign(reinterpret_cast<const char*>(e.data), e.size); break;
        case miUTF16:
        case miUINT16:
            for (std::size_t i = 0; i + 1 < e.size; i += 2) {
                std::uint16_t c;
                std::memcpy(&c, e.data + i, 2);
                s.push_back(c < 128 ? static_cast<char>(c) : '?');
            }
            break;
        default: throw FormatError("MAT: unsupported char storage type " + std::to_string(e.type));
    }
    return s;
}

std::vector<std::uint8_t> inflate_all(const std::uint8_t* data, std::size_t size) {
    z_stream zs{};
    if (inflateInit(&zs) != Z_OK) throw FormatError("MAT: zlib init failed");
    zs.next_in = const_cast<Bytef*>(data);
    zs.avail_in = static_cast<uInt>(size);
    std::vector<std::uint8_t> out;
    std::uint8_t chunk[1 << 16];
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        zs.next_out = chunk;
        zs.avail_out = sizeof chunk;
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw FormatError("MAT: corrupt compressed element");
        }
        out.insert(out.end(), chunk, chunk + (sizeof chunk - zs.avail_out));
        if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) break;
    }
    inflateEnd(&zs);
    return out;
}

Array parse_matrix(const Element& e);

Array parse_matrix(const Element& e) {
    Array a;
    if (e.size == 0) {
        a.cls = ArrayClass::Double;
        a.dims = {0, 0};
        return a;
    }
    Cursor c(e.data, e.size);
    const Element flags = c.next();
    if (flags.type != miUINT32 || flags.size < 8) throw FormatError("MAT: bad array flags");
    std::uint32_t flag_word;
    std::memcpy(&flag_word, flags.data, 4);
    a.cls = static_cast<ArrayClass>(flag_word & 0xFF);
    const bool complex = (flag_word & 0x0800) != 0;

    const Element dims = c.next();
    if (dims.type != miINT32) throw FormatError("MAT: bad dimensions element");
    for (std::size_t i = 0; i + 4 <= dims.size; i += 4) {
        std::int32_t d;
        std::memcpy(&d, dims.data + i, 4);
        a.dims.push_back(static_cast<std::size_t>(d));
    }
    const Element name = c.next();
    a.name.assign(reinterpret_cast<const char*>(name.data), name.size);

    switch (a.cls) {
        case ArrayClass::Double:
        case ArrayClass::Single:
        case ArrayClass::Int8:
        case ArrayClass::UInt8:
        case ArrayClass::Int16:
        case ArrayClass::UInt16:
        case ArrayClass::Int32:
        case ArrayClass::UInt32:
        case ArrayClass::Int64:
        case ArrayClass::UInt64: {
            a.real = numeric_payload(c.next());
            if (complex && !c.done()) c.next();  // imaginary part ignored
            if (a.real.size() != a.numel()) throw FormatError("MAT: numeric payload size mismatch in '" + a.name + "'");
            break;
        }
        case ArrayClass::Char: a.text = char_payload(c.next()); break;
        case ArrayClass::Struct: {
            const Element len_el = c.next();
            std::int32_t field_len;
            std::memcpy(&field_len, len_el.data, 4);
            const Element names = c.next();
            if (field_len <= 0) throw FormatError("MAT: bad struct field name length");
            for (std::size_t off = 0; off + field_len <= names.size; off += field_len) {
                const char* p = reinterpret_cast<const char*>(names.data + off);
                a.fields.emplace_back(p, strnlen(p, field_len));
            }
            const std::size_t count = a.numel() * a.fields.size();
            a.members.reserve(count);
            for (std::size_t i = 0; i < count; ++i) {
                const Element m = c.next();
                if (m.type != miMATRIX) throw FormatError("MAT: struct member is not a matrix");
                a.members.push_back(parse_matrix(m));
            }
            break;
        }
        case ArrayClass::Cell: {
            for (std::size_t i = 0; i < a.numel(); ++i) {
                const Element m = c.next();
                if (m.type != miMATRIX) throw FormatError("MAT: cell entry is not a matrix");
                a.cells.push_back(parse_matrix(m));
            }
            break;
        }
        default: break;  // sparse/object: skipped
    }
    return a;
}

void collect(const std::uint8_t* data, std::size_t size, std::vector<Array>& out) {
    Cursor c(data, size);
    while (!c.done()) {
        const Element e = c.next();
        if (e.type == miCOMPRESSED) {
            const auto inflated = inflate_all(e.data, e.size);
            collect(inflated.data(), inflated.size(), out);
        } else if (e.type == miMATRIX) {
            out.push_back(parse_matrix(e));
        }
    }
}

}  // namespace

std::size_t Array::numel() const {
    if (dims.empty()) return 0;
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

bool Array::is_numeric() const {
    return static_cast<int>(cls) >= static_cast<int>(ArrayClass::Double) &&
           static_cast<int>(cls) <= static_cast<int>(ArrayClass::UInt64);
}

const Array* Array::field(const std::string& name, std::size_t index) const {
    if (cls != ArrayClass::Struct || index >= numel()) return nullptr;
    for (std::size_t f = 0; f < fields.size(); ++f)
        if (fields[f] == name) return &members[index * fields.size() + f];
    return nullptr;
}

std::vector<Array> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingDataError("MAT-file not found: " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 128) throw FormatError(path.string() + ": too short for a MAT-file header");
    if (std::memcmp(bytes.data(), "MATLAB 5.0", 10) != 0)
        throw FormatError(path.string() + ": not a MATLAB Level-5 MAT-file");
    if (bytes[126] != 'I' || bytes[127] != 'M')
        throw FormatError(path.string() + ": big-endian MAT-files are not supported");
    std::vector<Array> out;
    collect(bytes.data() + 128, bytes.size() - 128, out);
    return out;
}

}  // namespace mbfd::mat
