#include "sosr/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace sosr {
namespace {

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}
  std::uint64_t uint(int width) {
    need(width);
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += width;
    return v;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
  std::uint64_t u64() { return uint(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  void raw(char* out, std::size_t n) {
    need(n);
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw FormatError("checkpoint truncated");
  }
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const Model<float>& model, const std::filesystem::path& path) {
  Writer w;
  w.raw(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(model.input_shape().size()));
  for (std::size_t d : model.input_shape()) w.u32(static_cast<std::uint32_t>(d));
  w.u32(static_cast<std::uint32_t>(model.layers().size()));
  for (const auto& layer : model.layers()) {
    std::array<std::uint32_t, 6> f{};
    if (const auto* d = std::get_if<DenseSpec>(&layer)) {
      f = {0, static_cast<std::uint32_t>(d->in), static_cast<std::uint32_t>(d->out), 0, 0, 0};
    } else if (const auto* c = std::get_if<Conv2dSpec>(&layer)) {
      f = {1,
           static_cast<std::uint32_t>(c->in_channels),
           static_cast<std::uint32_t>(c->out_channels),
           static_cast<std::uint32_t>(c->kernel),
           static_cast<std::uint32_t>(c->stride),
           static_cast<std::uint32_t>(c->pad)};
    } else if (std::holds_alternative<ReluSpec>(layer)) {
      f = {2, 0, 0, 0, 0, 0};
    } else if (const auto* p = std::get_if<MaxPool2dSpec>(&layer)) {
      f = {3, static_cast<std::uint32_t>(p->size), 0, 0, 0, 0};
    } else {
      f = {4, 0, 0, 0, 0, 0};
    }
    for (auto v : f) w.u32(v);
  }
  w.u64(model.parameter_count());
  for (const auto& p : model.parameters()) {
    for (float v : p.value.values()) w.f32(v);
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

Model<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  Reader r(std::vector<char>(std::istreambuf_iterator<char>(in), {}));

  char magic[8];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw FormatError("not a checkpoint file (bad magic): " + path.string());
  }
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto rank = r.u32();
  if (rank > 8) throw FormatError("implausible input rank in checkpoint");
  Shape input(rank);
  for (auto& d : input) d = r.u32();
  const auto count = r.u32();
  if (count > 4096) throw FormatError("implausible layer count in checkpoint");
  std::vector<LayerSpec> layers;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::array<std::uint32_t, 6> f{};
    for (auto& v : f) v = r.u32();
    switch (f[0]) {
      case 0: layers.emplace_back(DenseSpec{f[1], f[2]}); break;
      case 1: layers.emplace_back(Conv2dSpec{f[1], f[2], f[3], f[4], f[5]}); break;
      case 2: layers.emplace_back(ReluSpec{}); break;
      case 3: layers.emplace_back(MaxPool2dSpec{f[1]}); break;
      case 4: layers.emplace_back(FlattenSpec{}); break;
      default: throw FormatError("unknown layer kind " + std::to_string(f[0]) + " in checkpoint");
    }
  }
  Model<float> model;
  try {
    model = Model<float>::zeros(std::move(layers), std::move(input));
  } catch (const InvalidInput& e) {
    throw FormatError(std::string("checkpoint layer list is inconsistent: ") + e.what());
  }
  if (r.u64() != model.parameter_count()) {
    throw FormatError("checkpoint parameter count does not match its layer list");
  }
  for (auto& p : model.parameters()) {
    for (float& v : p.value.values()) v = r.f32();
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint parameters");
  return model;
}

}  // namespace sosr
