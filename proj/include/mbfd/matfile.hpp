#pragma once

// Reader for MATLAB Level-5 MAT-files (the container of the CWRU, MFPT and
// Paderborn archives). Numeric, char, struct and cell arrays are decoded;
// sparse and object arrays are skipped. Compressed (miCOMPRESSED) elements
// are inflated with zlib. Only little-endian files are accepted.

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace mbfd::mat {

enum class ArrayClass {
    Cell = 1,
    Struct = 2,
    Object = 3,
    Char = 4,
    Sparse = 5,
    Double = 6,
    Single = 7,
    Int8 = 8,
    UInt8 = 9,
    Int16 = 10,
    UInt16 = 11,
    Int32 = 12,
    UInt32 = 13,
    Int64 = 14,
    UInt64 = 15,
};

struct Array {
    std::string name;
    ArrayClass cls = ArrayClass::Double;
    std::vector<std::size_t> dims;
    // Numeric payload converted to double, column-major as stored.
    std::vector<double> real;
    // Char arrays (row vectors only are meaningful here).
    std::string text;
    // Struct arrays: field names, and numel() * fields.size() members in
    // element-major order (element e, field f at e * fields.size() + f).
    std::vector<std::string> fields;
    std::vector<Array> members;
    // Cell arrays: numel() entries.
    std::vector<Array> cells;

    std::size_t numel() const;
    bool is_numeric() const;
    // Struct member by field name for element `index`; nullptr when absent.
    const Array* field(const std::string& name, std::size_t index = 0) const;
};

// Top-level variables of a MAT-file, in file order. Throws FormatError on a
// malformed or unsupported container and MissingDataError when the file does
// not exist.
std::vector<Array> read_file(const std::filesystem::path& path);

}  // namespace mbfd::mat
