#include "lipb/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <vector>

namespace lipb {
namespace {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written with native little-endian stores");

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  template <typename T>
  void put(T value) {
    out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }
  void bytes(const char* data, std::size_t len) { out_.write(data, static_cast<std::streamsize>(len)); }
  void name(const std::string& s) {
    put(static_cast<std::uint16_t>(s.size()));
    bytes(s.data(), s.size());
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}
  template <typename T>
  T get(const char* what) {
    T value{};
    read(reinterpret_cast<char*>(&value), sizeof(T), what);
    return value;
  }
  void read(char* dst, std::size_t len, const char* what) {
    in_.read(dst, static_cast<std::streamsize>(len));
    if (static_cast<std::size_t>(in_.gcount()) != len) {
      throw FormatError(std::string("truncated file reading ") + what, offset_ + in_.gcount());
    }
    offset_ += len;
  }
  std::string name() {
    const auto len = get<std::uint16_t>("name length");
    std::string s(len, '\0');
    read(s.data(), len, "name");
    return s;
  }
  std::uint64_t offset() const { return offset_; }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::istream& in_;
  std::uint64_t offset_ = 0;
};

}  // namespace

FeatureDataset read_fset(std::istream& in) {
  Reader r(in);
  char magic[5];
  r.read(magic, 5, "magic");
  if (std::memcmp(magic, kFeatureMagic, 5) != 0) throw FormatError("bad magic", 0);
  const auto version = r.get<std::uint16_t>("version");
  if (version != kFeatureVersion) {
    throw FormatError("unsupported FSET version " + std::to_string(version), 5);
  }
  const auto n = r.get<std::uint32_t>("n");
  const auto d = r.get<std::uint32_t>("d");
  const auto c = r.get<std::uint32_t>("C");
  if (c == 0 || c > static_cast<std::uint32_t>(std::numeric_limits<int>::max())) {
    throw FormatError("invalid class count", 15);
  }

  FeatureDataset ds;
  ds.num_classes = static_cast<int>(c);
  ds.features.resize(n, d);
  ds.labels.resize(n);
  ds.ids.resize(n);
  std::vector<float> row(d);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint64_t record_offset = r.offset();
    const auto label = r.get<std::uint32_t>("label");
    if (label >= c) {
      throw FormatError("label " + std::to_string(label) + " >= C", record_offset);
    }
    r.read(reinterpret_cast<char*>(row.data()), sizeof(float) * d, "features");
    for (std::uint32_t j = 0; j < d; ++j) {
      if (!std::isfinite(row[j])) throw FormatError("non-finite feature", record_offset + 4 + 4 * j);
      ds.features(i, j) = row[j];
    }
    ds.labels[i] = static_cast<int>(label);
    ds.ids[i] = i;
  }
  if (!r.at_end()) throw FormatError("trailing bytes after last record", r.offset());
  return ds;
}

void write_fset(const FeatureDataset& ds, std::ostream& out) {
  ds.validate();
  Writer w(out);
  w.bytes(kFeatureMagic, 5);
  w.put(kFeatureVersion);
  w.put(static_cast<std::uint32_t>(ds.size()));
  w.put(static_cast<std::uint32_t>(ds.dim()));
  w.put(static_cast<std::uint32_t>(ds.num_classes));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    w.put(static_cast<std::uint32_t>(ds.labels[i]));
    for (std::size_t j = 0; j < ds.dim(); ++j) {
      w.put(static_cast<float>(ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
    }
  }
}

FeatureDataset read_csv(std::istream& in, int num_classes) {
  std::string line;
  std::uint64_t line_no = 1;
  if (!std::getline(in, line) || line.rfind("label", 0) != 0) {
    throw FormatError("CSV header must start with 'label'", line_no);
  }
  const auto dim = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  std::vector<int> labels;
  std::vector<double> values;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::size_t cols = 0;
    while (std::getline(row, cell, ',')) {
      try {
        std::size_t used = 0;
        if (cols == 0) {
          const long label = std::stol(cell, &used);
          if (label < 0) throw FormatError("negative label", line_no);
          labels.push_back(static_cast<int>(label));
        } else {
          const double v = std::stod(cell, &used);
          if (!std::isfinite(v)) throw FormatError("non-finite feature", line_no);
          values.push_back(v);
        }
      } catch (const std::logic_error&) {
        throw FormatError("unparsable CSV cell '" + cell + "'", line_no);
      }
      ++cols;
    }
    if (cols != dim + 1) throw FormatError("CSV row has the wrong column count", line_no);
  }
  const int max_label = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end());
  if (num_classes == 0) num_classes = max_label + 1;
  if (max_label >= num_classes) throw FormatError("label >= C", line_no);
  Matrix features = Eigen::Map<Matrix>(values.data(), static_cast<Eigen::Index>(labels.size()),
                                       static_cast<Eigen::Index>(dim));
  return make_dataset(std::move(features), std::move(labels), num_classes);
}

void write_csv(const FeatureDataset& ds, std::ostream& out) {
  out << "label";
  for (std::size_t j = 0; j < ds.dim(); ++j) out << ",f" << j;
  out << '\n';
  out.precision(9);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << ds.labels[i];
    for (std::size_t j = 0; j < ds.dim(); ++j) {
      out << ',' << static_cast<float>(ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
    out << '\n';
  }
}

namespace {

bool is_csv(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return ext == ".csv";
}

}  // namespace

FeatureDataset read_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return is_csv(path) ? read_csv(in) : read_fset(in);
}

void write_features(const FeatureDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  if (is_csv(path)) {
    write_csv(ds, out);
  } else {
    write_fset(ds, out);
  }
  if (!out) throw Error("write failed for " + path.string());
}

void write_checkpoint(const BayesHeader& header, std::ostream& out) {
  Writer w(out);
  w.bytes(kCheckpointMagic, 5);
  w.put(kCheckpointVersion);
  const std::vector<std::pair<std::string, double>> scalars = {
      {"variant", static_cast<double>(header.variant)},
      {"beta", header.beta},
      {"mc_samples_train", static_cast<double>(header.mc_samples_train)},
      {"mc_samples_infer", static_cast<double>(header.mc_samples_infer)},
      {"prior_std", header.layer1.options.prior_std},
      {"eps_sn", header.layer1.options.eps_sn},
      {"sn_iters", static_cast<double>(header.layer1.options.sn_iters)},
      {"spectral_norm", header.layer1.options.spectral_norm ? 1.0 : 0.0},
      {"stochastic", header.layer1.options.stochastic ? 1.0 : 0.0},
  };
  w.put(static_cast<std::uint32_t>(scalars.size()));
  for (const auto& [name, value] : scalars) {
    w.name(name);
    w.put(value);
  }
  const std::vector<std::pair<std::string, Matrix>> matrices = {
      {"layer1.mu", header.layer1.mu},     {"layer1.rho", header.layer1.rho},
      {"layer1.u", header.layer1.u_buffer}, {"layer2.mu", header.layer2.mu},
      {"layer2.rho", header.layer2.rho},   {"layer2.u", header.layer2.u_buffer},
  };
  w.put(static_cast<std::uint32_t>(matrices.size()));
  for (const auto& [name, m] : matrices) {
    w.name(name);
    w.put(static_cast<std::uint32_t>(m.rows()));
    w.put(static_cast<std::uint32_t>(m.cols()));
    w.bytes(reinterpret_cast<const char*>(m.data()), sizeof(double) * static_cast<std::size_t>(m.size()));
  }
}

BayesHeader read_checkpoint(std::istream& in) {
  Reader r(in);
  char magic[5];
  r.read(magic, 5, "magic");
  if (std::memcmp(magic, kCheckpointMagic, 5) != 0) throw FormatError("bad magic", 0);
  const auto version = r.get<std::uint16_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), 5);
  }
  std::map<std::string, double> scalars;
  const auto n_scalars = r.get<std::uint32_t>("scalar count");
  for (std::uint32_t i = 0; i < n_scalars; ++i) {
    std::string name = r.name();
    scalars[name] = r.get<double>("scalar");
  }
  std::map<std::string, Matrix> matrices;
  const auto n_matrices = r.get<std::uint32_t>("matrix count");
  for (std::uint32_t i = 0; i < n_matrices; ++i) {
    std::string name = r.name();
    const auto rows = r.get<std::uint32_t>("rows");
    const auto cols = r.get<std::uint32_t>("cols");
    Matrix m(rows, cols);
    r.read(reinterpret_cast<char*>(m.data()), sizeof(double) * rows * cols, "matrix data");
    matrices[name] = std::move(m);
  }
  auto scalar = [&](const std::string& name) {
    const auto it = scalars.find(name);
    if (it == scalars.end()) throw FormatError("checkpoint missing scalar " + name, r.offset());
    return it->second;
  };
  auto matrix = [&](const std::string& name) {
    const auto it = matrices.find(name);
    if (it == matrices.end()) throw FormatError("checkpoint missing matrix " + name, r.offset());
    return it->second;
  };

  LayerOptions lo;
  lo.prior_std = scalar("prior_std");
  lo.eps_sn = scalar("eps_sn");
  lo.sn_iters = static_cast<int>(scalar("sn_iters"));
  lo.spectral_norm = scalar("spectral_norm") != 0.0;
  lo.stochastic = scalar("stochastic") != 0.0;

  BayesHeader h;
  h.variant = static_cast<Variant>(static_cast<int>(scalar("variant")));
  h.beta = scalar("beta");
  h.mc_samples_train = static_cast<int>(scalar("mc_samples_train"));
  h.mc_samples_infer = static_cast<int>(scalar("mc_samples_infer"));
  h.layer1 = {matrix("layer1.mu"), matrix("layer1.rho"), matrix("layer1.u").col(0), lo};
  h.layer2 = {matrix("layer2.mu"), matrix("layer2.rho"), matrix("layer2.u").col(0), lo};
  if (h.layer1.rho.rows() != h.layer1.mu.rows() || h.layer1.rho.cols() != h.layer1.mu.cols() ||
      h.layer2.rho.rows() != h.layer2.mu.rows() || h.layer2.rho.cols() != h.layer2.mu.cols() ||
      h.layer2.in_dim() != h.layer1.out_dim() ||
      static_cast<std::size_t>(h.layer1.u_buffer.size()) != h.layer1.out_dim() ||
      static_cast<std::size_t>(h.layer2.u_buffer.size()) != h.layer2.out_dim()) {
    throw FormatError("checkpoint matrices have inconsistent shapes", r.offset());
  }
  return h;
}

void save_checkpoint(const BayesHeader& header, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_checkpoint(header, out);
}

BayesHeader load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace lipb
