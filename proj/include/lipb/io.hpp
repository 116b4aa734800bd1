#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "lipb/dataset.hpp"
#include "lipb/error.hpp"
#include "lipb/header.hpp"

namespace lipb {

// Malformed input file. `offset` is the byte (binary) or line (text) position.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " at offset " + std::to_string(offset)), offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

inline constexpr char kFeatureMagic[5] = {'F', 'S', 'E', 'T', '1'};
inline constexpr std::uint16_t kFeatureVersion = 1;
// magic(5) + version u16 + n u32 + d u32 + C u32
inline constexpr std::size_t kFeatureHeaderBytes = 19;

// FSET1 container, all integers little-endian, features as 32-bit floats.
// Ids are assigned 0..n-1 in record order.
FeatureDataset read_fset(std::istream& in);
void write_fset(const FeatureDataset& ds, std::ostream& out);

// CSV with header "label,f0,...,f{d-1}". C is one more than the largest label
// unless `num_classes` is given.
FeatureDataset read_csv(std::istream& in, int num_classes = 0);
void write_csv(const FeatureDataset& ds, std::ostream& out);

// Dispatches on extension: ".csv" selects CSV, anything else FSET1.
FeatureDataset read_features(const std::filesystem::path& path);
void write_features(const FeatureDataset& ds, const std::filesystem::path& path);

inline constexpr char kCheckpointMagic[5] = {'L', 'P', 'C', 'K', '1'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

// Named f64 scalars followed by named f64 matrices, little-endian.
void write_checkpoint(const BayesHeader& header, std::ostream& out);
BayesHeader read_checkpoint(std::istream& in);
void save_checkpoint(const BayesHeader& header, const std::filesystem::path& path);
BayesHeader load_checkpoint(const std::filesystem::path& path);

}  // namespace lipb
