#include "rmacvae/feature_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string_view>
#include <unordered_set>

#include "rmacvae/rng.hpp"

namespace rmacvae {

namespace {

constexpr char kMagic[4] = {'D', 'F', 'M', '1'};

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }
  void reserve(std::size_t n) { bytes_.reserve(n); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::uint64_t n, const char* what) const {
    if (n > remaining()) {
      throw DfmTruncatedError(std::string("dfm: truncated ") + what + " (need " +
                              std::to_string(n) + " bytes, have " +
                              std::to_string(remaining()) + ")");
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return bytes_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::span<const std::uint8_t> raw(std::size_t n, const char* what) {
    need(n, what);
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::int32_t> FactorTable::column(std::size_t factor) const {
  std::vector<std::int32_t> out(num_rows());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = at(i, factor);
  return out;
}

void FactorTable::validate() const {
  const std::size_t f = num_factors();
  if (f == 0) {
    if (!values.empty()) throw std::invalid_argument("factor table: values without factors");
    return;
  }
  if (values.size() % f != 0) {
    throw std::invalid_argument("factor table: value count not a multiple of factor count");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto v = values[i];
    if (v < 0 || static_cast<std::uint32_t>(v) >= cardinalities[i % f]) {
      throw std::invalid_argument("factor table: value " + std::to_string(v) + " at row " +
                                  std::to_string(i / f) + ", factor " +
                                  std::to_string(i % f) + " outside cardinality " +
                                  std::to_string(cardinalities[i % f]));
    }
  }
}

void DfmDataset::validate() const {
  const std::uint64_t expected = static_cast<std::uint64_t>(n) * c * h * w;
  if (data.size() != expected) {
    throw DfmInvariantError("dfm: payload has " + std::to_string(data.size()) +
                            " values, header implies " + std::to_string(expected));
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw DfmNonFiniteError("dfm: non-finite value in record " +
                              std::to_string(record_size() ? i / record_size() : 0));
    }
  }
  if (factors) {
    try {
      factors->validate();
    } catch (const std::invalid_argument& e) {
      throw DfmInvariantError(std::string("dfm: ") + e.what());
    }
    if (factors->num_factors() == 0) throw DfmInvariantError("dfm: factor table with f=0");
    if (factors->num_rows() != n) {
      throw DfmInvariantError("dfm: factor rows " + std::to_string(factors->num_rows()) +
                              " != n " + std::to_string(n));
    }
  }
}

std::vector<std::uint8_t> encode_dfm(const DfmDataset& dataset) {
  dataset.validate();
  ByteWriter out;
  out.reserve(25 + dataset.data.size() * 4 +
              (dataset.factors ? dataset.factors->values.size() * 4 + 64 : 0));
  out.raw(kMagic, 4);
  out.u32(kDfmVersion);
  out.u32(dataset.n);
  out.u32(dataset.c);
  out.u32(dataset.h);
  out.u32(dataset.w);
  out.u8(dataset.factors ? 1 : 0);
  if (dataset.factors) {
    out.u32(static_cast<std::uint32_t>(dataset.factors->num_factors()));
    for (auto card : dataset.factors->cardinalities) out.u32(card);
  }
  for (float v : dataset.data) out.f32(v);
  if (dataset.factors) {
    for (auto v : dataset.factors->values) out.i32(v);
  }
  return out.take();
}

DfmDataset decode_dfm(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  const auto magic = in.raw(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw DfmMagicError("dfm: bad magic bytes");
  const std::uint32_t version = in.u32("version");
  if (version != kDfmVersion) {
    throw DfmVersionError("dfm: unsupported version " + std::to_string(version));
  }
  DfmDataset ds;
  ds.n = in.u32("header");
  ds.c = in.u32("header");
  ds.h = in.u32("header");
  ds.w = in.u32("header");
  const std::uint8_t has_factors = in.u8("header");
  if (has_factors > 1) throw DfmError("dfm: has_factors flag must be 0 or 1");
  if (has_factors) {
    FactorTable table;
    const std::uint32_t f = in.u32("factor count");
    in.need(static_cast<std::uint64_t>(f) * 4, "cardinalities");
    table.cardinalities.resize(f);
    for (auto& card : table.cardinalities) card = in.u32("cardinalities");
    ds.factors = std::move(table);
  }

  const std::uint64_t count = static_cast<std::uint64_t>(ds.n) * ds.c * ds.h * ds.w;
  in.need(count * 4, "payload");
  ds.data.resize(count);
  const auto payload = in.raw(count * 4, "payload");
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(payload[4 * i + b]) << (8 * b);
    ds.data[i] = std::bit_cast<float>(bits);
  }
  if (ds.factors) {
    const std::uint64_t nvals = static_cast<std::uint64_t>(ds.n) * ds.factors->num_factors();
    in.need(nvals * 4, "factor labels");
    ds.factors->values.resize(nvals);
    for (auto& v : ds.factors->values) v = static_cast<std::int32_t>(in.u32("factor labels"));
  }
  if (in.remaining() != 0) {
    throw DfmError("dfm: " + std::to_string(in.remaining()) + " trailing bytes");
  }
  ds.validate();
  return ds;
}

void write_dfm(const DfmDataset& dataset, const std::filesystem::path& path) {
  const auto bytes = encode_dfm(dataset);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DfmIoError("dfm: cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DfmIoError("dfm: write failed for " + path.string());
}

DfmDataset read_dfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DfmIoError("dfm: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_dfm(bytes);
}

std::vector<std::size_t> sample_indices(std::size_t n_unique, std::size_t count,
                                        std::uint64_t seed) {
  if (n_unique == 0) throw std::invalid_argument("sample_indices: empty source");
  Rng rng(seed);
  std::vector<std::size_t> indices(count);
  for (auto& idx : indices) idx = static_cast<std::size_t>(rng.uniform_index(n_unique));
  return indices;
}

DfmDataset gather_records(const DfmDataset& source, std::span<const std::size_t> indices) {
  DfmDataset out;
  out.n = static_cast<std::uint32_t>(indices.size());
  out.c = source.c;
  out.h = source.h;
  out.w = source.w;
  const std::size_t rs = source.record_size();
  out.data.resize(indices.size() * rs);
  if (source.factors) {
    FactorTable table;
    table.cardinalities = source.factors->cardinalities;
    table.values.reserve(indices.size() * table.num_factors());
    out.factors = std::move(table);
  }
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = indices[i];
    if (src >= source.n) throw std::out_of_range("gather_records: index out of range");
    const auto rec = source.record(src);
    std::copy(rec.begin(), rec.end(), out.data.begin() + static_cast<std::ptrdiff_t>(i * rs));
    if (source.factors) {
      const auto row = source.factors->row(src);
      out.factors->values.insert(out.factors->values.end(), row.begin(), row.end());
    }
  }
  return out;
}

DfmDataset sample_with_replacement(const DfmDataset& source, std::size_t count,
                                   std::uint64_t seed) {
  if (source.n == 0) throw std::invalid_argument("sample_with_replacement: empty source");
  const auto indices = sample_indices(source.n, count, seed);
  return gather_records(source, indices);
}

DedupStats dedup_stats(const DfmDataset& dataset) {
  const std::size_t bytes_per_record = dataset.record_size() * sizeof(float);
  const auto* base = reinterpret_cast<const char*>(dataset.data.data());
  std::unordered_set<std::string_view> seen;
  seen.reserve(dataset.n);
  for (std::size_t i = 0; i < dataset.n; ++i) {
    seen.emplace(base + i * bytes_per_record, bytes_per_record);
  }
  DedupStats stats;
  stats.unique_count = dataset.n == 0 ? 0 : seen.size();
  stats.duplicate_count = dataset.n - stats.unique_count;
  return stats;
}

}  // namespace rmacvae
