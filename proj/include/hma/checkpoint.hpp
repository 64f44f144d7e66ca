#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>

#include "hma/tensor.hpp"

// Named-tensor container:
//
//   "HMA1\n"
//   "<entry count>\n"
//   one line per entry: "<name> f32 <d0> <d1> ...\n"   (no dims for scalars)
//   row-major little-endian float32 payloads, in header order
//
// Names may not contain whitespace.
namespace hma::checkpoint {

class FormatError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

using TensorMap = std::map<std::string, Tensor>;

void write(std::ostream& os, const TensorMap& tensors);
TensorMap read(std::istream& is);

void save(const std::filesystem::path& path, const TensorMap& tensors);
TensorMap load(const std::filesystem::path& path);

}  // namespace hma::checkpoint
