#include "efbg/dataset.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "efbg/error.hpp"

namespace efbg {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written with native little-endian stores");

namespace {

class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}

  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out_.insert(out_.end(), p, p + sizeof(T));
  }

  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }

 private:
  std::vector<std::uint8_t>& out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  template <typename T>
  T get() {
    T v;
    get_bytes(&v, sizeof(T));
    return v;
  }

  void get_bytes(void* dst, std::size_t n) {
    if (pos_ + n > in_.size()) throw FormatError("dataset truncated");
    std::memcpy(dst, in_.data() + pos_, n);
    pos_ += n;
  }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

MarkerChain Dataset::chain(std::size_t i) const {
  MarkerChain c;
  const auto t = target(i);
  c.positions.reserve(kMarkerCount);
  for (std::size_t k = 0; k < kMarkerCount; ++k) {
    c.positions.emplace_back(t[3 * k], t[3 * k + 1], t[3 * k + 2]);
  }
  return c;
}

void Dataset::append(std::span<const double> intensities, const MarkerChain& c) {
  if (intensities.size() != kInputSize || c.positions.size() != kMarkerCount) {
    throw ShapeError("dataset sample must hold 375 intensities and 21 markers");
  }
  for (double v : intensities) spectra.push_back(static_cast<float>(v));
  for (const auto& p : c.positions)
    for (int d = 0; d < 3; ++d) targets.push_back(static_cast<float>(p[d]));
  ++n_samples;
}

std::uint64_t dataset_file_size(std::size_t n_samples) {
  return kDatasetHeaderBytes + static_cast<std::uint64_t>(n_samples) * (kInputSize + kTargetSize) * 4;
}

std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
  if (ds.spectra.size() != ds.n_samples * kInputSize ||
      ds.targets.size() != ds.n_samples * kTargetSize) {
    throw ShapeError("dataset buffers do not match the sample count");
  }
  std::vector<std::uint8_t> out;
  out.reserve(dataset_file_size(ds.n_samples));
  Writer w(out);
  w.put_bytes(kDatasetMagic, 4);
  w.put<std::uint32_t>(kDatasetVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.n_samples));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(kSpectra));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(kWavelengths));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(kMarkerCount));
  w.put<double>(ds.wavelength_start);
  w.put<double>(ds.wavelength_end);
  for (std::size_t i = 0; i < ds.n_samples; ++i) {
    w.put_bytes(ds.spectra.data() + i * kInputSize, kInputSize * 4);
    w.put_bytes(ds.targets.data() + i * kTargetSize, kTargetSize * 4);
  }
  return out;
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  char magic[4];
  r.get_bytes(magic, 4);
  if (std::memcmp(magic, kDatasetMagic, 4) != 0) throw FormatError("bad dataset magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kDatasetVersion) {
    throw FormatError("unsupported dataset version " + std::to_string(version));
  }
  Dataset ds;
  ds.n_samples = r.get<std::uint32_t>();
  const auto n_spectra = r.get<std::uint32_t>();
  const auto n_wl = r.get<std::uint32_t>();
  const auto n_markers = r.get<std::uint32_t>();
  if (n_spectra != kSpectra || n_wl != kWavelengths || n_markers != kMarkerCount) {
    throw FormatError("dataset dimensions " + std::to_string(n_spectra) + "x" +
                      std::to_string(n_wl) + " / " + std::to_string(n_markers) +
                      " markers are not supported");
  }
  ds.wavelength_start = r.get<double>();
  ds.wavelength_end = r.get<double>();
  if (bytes.size() != dataset_file_size(ds.n_samples)) {
    throw FormatError("dataset size " + std::to_string(bytes.size()) + " bytes, expected " +
                      std::to_string(dataset_file_size(ds.n_samples)));
  }
  ds.spectra.resize(ds.n_samples * kInputSize);
  ds.targets.resize(ds.n_samples * kTargetSize);
  for (std::size_t i = 0; i < ds.n_samples; ++i) {
    r.get_bytes(ds.spectra.data() + i * kInputSize, kInputSize * 4);
    r.get_bytes(ds.targets.data() + i * kTargetSize, kTargetSize * 4);
  }
  return ds;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::uint8_t> bytes(size);
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size))) {
    throw IoError("failed reading " + path.string());
  }
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  write_file_bytes(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

void write_dataset(const std::filesystem::path& path, const Dataset& ds) {
  write_file_bytes(path, encode_dataset(ds));
}

Dataset read_dataset(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_dataset(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::filesystem::path sidecar_path(const std::filesystem::path& dataset_path) {
  auto p = dataset_path;
  p += ".json";
  return p;
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string digest_hex(const nlohmann::json& j) {
  const auto text = j.dump();
  const auto h = fnv1a64({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

}  // namespace efbg
