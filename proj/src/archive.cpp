#include "mbfd/archive.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>

#include "mbfd/error.hpp"

namespace mbfd {
namespace {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

constexpr char kMagic[8] = {'M', 'B', 'F', 'D', 'A', 'R', 'R', '1'};

template <typename T>
void put(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw FormatError("archive truncated");
    return value;
}

}  // namespace

void write_archive(const std::filesystem::path& path, const std::vector<NamedArray>& arrays) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(arrays.size()));
    for (const auto& a : arrays) {
        const std::uint64_t numel =
            std::accumulate(a.shape.begin(), a.shape.end(), std::uint64_t{1}, std::multiplies<>());
        if (numel != a.values.size()) throw ShapeError("archive entry '" + a.name + "' shape/value mismatch");
        put<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
        out.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
        put<std::uint8_t>(out, static_cast<std::uint8_t>(a.dtype));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(a.shape.size()));
        for (auto d : a.shape) put<std::uint64_t>(out, d);
        for (double v : a.values) {
            if (a.dtype == ArrayDType::F32)
                put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
            else
                put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
        }
    }
    if (!out) throw Error("write failed for " + path.string());
}

std::vector<NamedArray> read_archive(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingDataError("archive not found: " + path.string());
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw FormatError(path.string() + " is not a named-array archive");
    const auto count = get<std::uint32_t>(in);
    std::vector<NamedArray> arrays(count);
    for (auto& a : arrays) {
        const auto name_len = get<std::uint32_t>(in);
        a.name.resize(name_len);
        in.read(a.name.data(), name_len);
        const auto dtype = get<std::uint8_t>(in);
        if (dtype > 1) throw FormatError("unknown dtype in archive entry '" + a.name + "'");
        a.dtype = static_cast<ArrayDType>(dtype);
        const auto ndim = get<std::uint32_t>(in);
        a.shape.resize(ndim);
        std::uint64_t numel = 1;
        for (auto& d : a.shape) {
            d = get<std::uint64_t>(in);
            numel *= d;
        }
        a.values.resize(numel);
        for (auto& v : a.values) {
            if (a.dtype == ArrayDType::F32)
                v = std::bit_cast<float>(get<std::uint32_t>(in));
            else
                v = std::bit_cast<double>(get<std::uint64_t>(in));
        }
    }
    return arrays;
}

const NamedArray& find_array(const std::vector<NamedArray>& arrays, const std::string& name) {
    auto it = std::find_if(arrays.begin(), arrays.end(), [&](const NamedArray& a) { return a.name == name; });
    if (it == arrays.end()) throw FormatError("archive has no entry named '" + name + "'");
    return *it;
}

}  // namespace mbfd
