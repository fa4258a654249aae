#include "fedrec/wire.hpp"

#include <bit>
#include <cstring>

namespace fedrec {

static_assert(std::endian::native == std::endian::little, "wire encoding assumes a little-endian host");

namespace {

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out_.insert(out_.end(), p, p + sizeof(T));
  }
  void put_bytes(const char* s, std::size_t n) { out_.insert(out_.end(), s, s + n); }
  void put_doubles(const double* data, Eigen::Index n) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + static_cast<std::size_t>(n) * sizeof(double));
  }
  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void get_doubles(double* dst, Eigen::Index n) {
    const auto bytes = static_cast<std::size_t>(n) * sizeof(double);
    need(bytes);
    std::memcpy(dst, in_.data() + pos_, bytes);
    pos_ += bytes;
  }
  void expect_magic(const char* magic) {
    need(4);
    if (std::memcmp(in_.data() + pos_, magic, 4) != 0) throw ProtocolError(std::string("bad magic, expected ") + magic);
    pos_ += 4;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw ProtocolError("truncated payload");
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

void put_mlp(Writer& w, const Mlp& m) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.input_size()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.hidden_size()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.output_size()));
  m.for_each_tensor([&](const char*, const double* data, Eigen::Index n) { w.put_doubles(data, n); });
}

Mlp get_mlp(Reader& r) {
  const auto in = r.get<std::uint32_t>();
  const auto hidden = r.get<std::uint32_t>();
  const auto out = r.get<std::uint32_t>();
  Mlp m(in, hidden, out);
  m.for_each_tensor([&](const char*, double* data, Eigen::Index n) { r.get_doubles(data, n); });
  return m;
}

}  // namespace

Bytes encode_update(const LocalUpdate& update) {
  const auto d = static_cast<std::uint32_t>(update.delta_ncf.input_size() / 2);
  Writer w;
  w.put_bytes("FRLU", 4);
  w.put<std::uint16_t>(kWireVersion);
  w.put<std::uint16_t>(update.full_table ? 1 : 0);
  w.put<std::uint32_t>(update.user_id);
  w.put<std::uint64_t>(update.sample_count);
  w.put<std::uint32_t>(d);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(update.delta_rows.size()));
  for (const auto& [item, row] : update.delta_rows) {
    if (row.size() != d) throw DimensionError("encode_update: row width != d");
    w.put<std::uint32_t>(item);
    w.put_doubles(row.data(), row.size());
  }
  put_mlp(w, update.delta_ncf);
  put_mlp(w, update.delta_proxy);
  return w.take();
}

LocalUpdate decode_update(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.expect_magic("FRLU");
  if (const auto v = r.get<std::uint16_t>(); v != kWireVersion)
    throw ProtocolError("unsupported update version " + std::to_string(v));
  const auto flags = r.get<std::uint16_t>();
  LocalUpdate up;
  up.full_table = (flags & 1u) != 0;
  up.user_id = r.get<std::uint32_t>();
  up.sample_count = r.get<std::uint64_t>();
  const auto d = r.get<std::uint32_t>();
  const auto rows = r.get<std::uint32_t>();
  for (std::uint32_t k = 0; k < rows; ++k) {
    const auto item = r.get<std::uint32_t>();
    Vec row(d);
    r.get_doubles(row.data(), d);
    up.delta_rows.emplace(item, std::move(row));
  }
  up.delta_ncf = get_mlp(r);
  up.delta_proxy = get_mlp(r);
  if (!r.done()) throw ProtocolError("trailing bytes after update");
  if (!up.full_table)
    for (const auto& [item, row] : up.delta_rows) up.touched_items.push_back(item);
  return up;
}

std::size_t encoded_update_size(const LocalUpdate& update) {
  const auto d = static_cast<std::size_t>(update.delta_ncf.input_size() / 2);
  std::size_t n = 4 + 2 + 2 + 4 + 8 + 4 + 4;
  n += update.delta_rows.size() * (4 + d * sizeof(double));
  for (const Mlp* m : {&update.delta_ncf, &update.delta_proxy})
    n += 12 + static_cast<std::size_t>(m->parameter_count()) * sizeof(double);
  return n;
}

Bytes encode_report(const ContributionReport& report) {
  Writer w;
  w.put_bytes("FRCR", 4);
  w.put<std::uint16_t>(kWireVersion);
  w.put<std::uint16_t>(0);
  w.put<std::uint32_t>(report.user_id);
  w.put<double>(report.predicted_loss);
  return w.take();
}

ContributionReport decode_report(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.expect_magic("FRCR");
  if (const auto v = r.get<std::uint16_t>(); v != kWireVersion)
    throw ProtocolError("unsupported report version " + std::to_string(v));
  r.get<std::uint16_t>();
  ContributionReport rep;
  rep.user_id = r.get<std::uint32_t>();
  rep.predicted_loss = r.get<double>();
  if (!r.done()) throw ProtocolError("trailing bytes after report");
  return rep;
}

}  // namespace fedrec
