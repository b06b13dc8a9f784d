#pragma once

// Named-array archive shared by model checkpoints and fitted back-ends.
//
// Layout (all integers little-endian):
//   "MBFDARR1"                      8-byte magic
//   u32 count
//   count x { u32 name_len, name bytes, u8 dtype (0 = f32, 1 = f64),
//             u32 ndim, u64 dims[ndim], row-major values }

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mbfd {

enum class ArrayDType : std::uint8_t { F32 = 0, F64 = 1 };

struct NamedArray {
    std::string name;
    std::vector<std::uint64_t> shape;
    std::vector<double> values;
    ArrayDType dtype = ArrayDType::F32;
};

void write_archive(const std::filesystem::path& path, const std::vector<NamedArray>& arrays);
std::vector<NamedArray> read_archive(const std::filesystem::path& path);

const NamedArray& find_array(const std::vector<NamedArray>& arrays, const std::string& name);

}  // namespace mbfd
