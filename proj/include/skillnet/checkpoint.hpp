#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "skillnet/model.hpp"
#include "skillnet/tensor.hpp"

namespace skillnet {

// Named-tensor store. Layout, little-endian throughout:
//   magic "SKNT" | u32 version | u64 entry count
//   per entry: u32 name length | name bytes | u32 rank | u64 dims[rank]
//              | f32 values[product(dims)]
//   trailer: u64 byte count of everything before the trailer
// Values are stored as 32-bit floats; loading widens back to doubles.

struct TensorBlob {
  std::vector<int> dims;
  std::vector<double> values;
};

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& entries);
std::map<std::string, TensorBlob> load_checkpoint_blobs(const std::string& path);

void save_model(const Model& model, const std::string& path);

// Loads every model parameter by name; a missing or shape-mismatched entry is
// an integrity error. "acoustic.centroids" is attached when present.
void load_model(Model& model, const std::string& path);

}  // namespace skillnet
