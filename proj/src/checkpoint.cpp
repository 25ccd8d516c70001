#include "ghn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace ghn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::f32: return 4;
    case DType::f64: return 8;
    case DType::u8: return 1;
  }
  throw CheckpointError(CheckpointErrorKind::corrupt_length, "unknown dtype code");
}

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

namespace {

constexpr const char* kStepEntry = "meta.step";
constexpr const char* kConfigEntry = "meta.config";

class Writer {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <class U>
  void put(U v) {
    raw(&v, sizeof v);
  }
  void entry(const CheckpointEntry& e) {
    if (e.name.size() > 0xffff) throw CheckpointError(CheckpointErrorKind::corrupt_length, "name too long");
    put(static_cast<std::uint16_t>(e.name.size()));
    raw(e.name.data(), e.name.size());
    put(static_cast<std::uint8_t>(e.dtype));
    put(static_cast<std::uint8_t>(e.extents.size()));
    for (auto x : e.extents) put(x);
    raw(e.bytes.data(), e.bytes.size());
  }
  std::vector<unsigned char> take() { return std::move(out_); }

 private:
  std::vector<unsigned char> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& b) : buf_(b) {}
  void raw(void* p, std::size_t n) {
    if (pos_ + n > buf_.size()) {
      throw CheckpointError(CheckpointErrorKind::corrupt_length,
                            "checkpoint truncated at byte " + std::to_string(pos_));
    }
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  template <class U>
  U get() {
    U v;
    raw(&v, sizeof v);
    return v;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  const std::vector<unsigned char>& buf_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> serialize(const Checkpoint& c) {
  Writer w;
  w.raw(kCheckpointMagic, sizeof kCheckpointMagic);
  w.put(c.version);
  w.put(static_cast<std::uint32_t>(c.entries.size() + 2));
  CheckpointEntry step{kStepEntry, DType::f64, {}, {}};
  const double step_value = static_cast<double>(c.step);
  step.bytes.resize(8);
  std::memcpy(step.bytes.data(), &step_value, 8);
  w.entry(step);
  CheckpointEntry cfg{kConfigEntry, DType::u8, {static_cast<std::uint32_t>(c.config.size())},
                      std::vector<unsigned char>(c.config.begin(), c.config.end())};
  w.entry(cfg);
  for (const auto& e : c.entries) w.entry(e);
  return w.take();
}

Checkpoint deserialize(const std::vector<unsigned char>& bytes) {
  Reader r(bytes);
  char magic[8];
  if (bytes.size() < sizeof magic) {
    throw CheckpointError(CheckpointErrorKind::corrupt_length, "checkpoint shorter than its magic");
  }
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw CheckpointError(CheckpointErrorKind::bad_magic, "not a GHN checkpoint");
  }
  Checkpoint c;
  c.version = r.get<std::uint32_t>();
  if (c.version != kCheckpointVersion) {
    throw CheckpointError(CheckpointErrorKind::version_mismatch,
                          "checkpoint version " + std::to_string(c.version) + ", expected " +
                              std::to_string(kCheckpointVersion));
  }
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    e.name.resize(r.get<std::uint16_t>());
    r.raw(e.name.data(), e.name.size());
    e.dtype = static_cast<DType>(r.get<std::uint8_t>());
    const auto rank = r.get<std::uint8_t>();
    std::size_t n = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      e.extents.push_back(r.get<std::uint32_t>());
      n *= e.extents.back();
    }
    e.bytes.resize(n * dtype_size(e.dtype));
    r.raw(e.bytes.data(), e.bytes.size());
    if (e.name == kStepEntry && e.dtype == DType::f64 && e.bytes.size() == 8) {
      double v;
      std::memcpy(&v, e.bytes.data(), 8);
      c.step = static_cast<std::uint64_t>(v);
    } else if (e.name == kConfigEntry && e.dtype == DType::u8) {
      c.config.assign(e.bytes.begin(), e.bytes.end());
    } else {
      c.entries.push_back(std::move(e));
    }
  }
  if (!r.done()) {
    throw CheckpointError(CheckpointErrorKind::corrupt_length, "trailing bytes after last entry");
  }
  return c;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  const auto bytes = serialize(c);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointErrorKind::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(CheckpointErrorKind::io, "write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointErrorKind::io, "cannot open " + path.string());
  std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>()};
  return deserialize(bytes);
}

template <class T>
Checkpoint make_checkpoint(Network<T>& net, std::uint64_t step, const std::string& config) {
  Checkpoint c;
  c.step = step;
  c.config = config;
  for (const auto* p : net.parameters()) {
    CheckpointEntry e;
    e.name = p->name;
    e.dtype = sizeof(T) == 4 ? DType::f32 : DType::f64;
    for (auto d : p->value.shape()) e.extents.push_back(static_cast<std::uint32_t>(d));
    e.bytes.resize(p->value.size() * sizeof(T));
    std::memcpy(e.bytes.data(), p->value.vec().data(), e.bytes.size());
    c.entries.push_back(std::move(e));
  }
  return c;
}

template <class T>
void restore_checkpoint(const Checkpoint& c, Network<T>& net) {
  const DType want = sizeof(T) == 4 ? DType::f32 : DType::f64;
  for (auto* p : net.parameters()) {
    const CheckpointEntry* e = c.find(p->name);
    if (!e) {
      throw CheckpointError(CheckpointErrorKind::missing_parameter,
                            "checkpoint has no entry for parameter '" + p->name + "'");
    }
    if (e->dtype != want) {
      throw CheckpointError(CheckpointErrorKind::dtype_mismatch,
                            "parameter '" + p->name + "' stored at a different precision");
    }
    Shape shape(e->extents.begin(), e->extents.end());
    if (shape != p->value.shape()) {
      throw CheckpointError(CheckpointErrorKind::shape_mismatch,
                            "parameter '" + p->name + "' has shape " + shape_str(shape) +
                                ", network expects " + shape_str(p->value.shape()));
    }
    std::memcpy(p->value.vec().data(), e->bytes.data(), e->bytes.size());
  }
}

template Checkpoint make_checkpoint(Network<float>&, std::uint64_t, const std::string&);
template Checkpoint make_checkpoint(Network<double>&, std::uint64_t, const std::string&);
template void restore_checkpoint(const Checkpoint&, Network<float>&);
template void restore_checkpoint(const Checkpoint&, Network<double>&);

}  // namespace ghn
