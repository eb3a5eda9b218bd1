#include "star/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <vector>

namespace star {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian host");

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t get_u32(std::istream& is) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
    throw Error("checkpoint: unexpected end of file");
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& os, const ModelParams<float>& params) {
  auto tensors = params.all();
  put_u32(os, kCheckpointVersion);
  put_u32(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto* p : tensors) {
    put_u32(os, static_cast<std::uint32_t>(p->name.size()));
    os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    put_u32(os, 2);
    put_u32(os, static_cast<std::uint32_t>(p->value.rows()));
    put_u32(os, static_cast<std::uint32_t>(p->value.cols()));
    // Eigen storage is column-major; the payload is row-major.
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = p->value;
    os.write(reinterpret_cast<const char*>(rm.data()),
             static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(rm.size())));
  }
  if (!os)
    throw Error("checkpoint: write failed");
}

ModelParams<float> read_checkpoint(std::istream& is) {
  std::uint32_t version = get_u32(is);
  if (version != kCheckpointVersion)
    throw Error("checkpoint: unsupported format version " + std::to_string(version));
  std::uint32_t count = get_u32(is);
  std::map<std::string, Eigen::MatrixXf> tensors;
  for (std::uint32_t t = 0; t < count; ++t) {
    std::uint32_t len = get_u32(is);
    if (len > 4096)
      throw Error("checkpoint: implausible tensor name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), len))
      throw Error("checkpoint: unexpected end of file");
    std::uint32_t rank = get_u32(is);
    if (rank != 2)
      throw Error("checkpoint: tensor " + name + " has unsupported rank " + std::to_string(rank));
    std::uint32_t r = get_u32(is), c = get_u32(is);
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(r, c);
    if (!is.read(reinterpret_cast<char*>(rm.data()),
                 static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(rm.size()))))
      throw Error("checkpoint: truncated payload for " + name);
    tensors[name] = rm;
  }

  ModelParams<float> p;
  // Slot order of ModelParams::all().
  static const char* kNames[] = {"char_emb", "conv_w", "conv_b", "word_emb", "fwd_wx",
                                 "fwd_wh",   "fwd_b",  "bwd_wx", "bwd_wh",   "bwd_b",
                                 "out_w",    "out_b",  "intent_w", "intent_b"};
  auto slots = p.all();
  for (std::size_t i = 0; i < slots.size(); ++i) {
    auto it = tensors.find(kNames[i]);
    if (it == tensors.end())
      throw Error(std::string("checkpoint: missing tensor ") + kNames[i]);
    *slots[i] = ad::Parameter<float>(kNames[i], it->second);
  }

  ModelDims d;
  d.char_dim = static_cast<int>(p.char_emb.value.cols());
  d.char_channels = static_cast<int>(p.conv_w.value.rows());
  d.char_width = d.char_dim ? static_cast<int>(p.conv_w.value.cols()) / d.char_dim : 0;
  d.word_dim = static_cast<int>(p.word_emb.value.cols());
  d.hidden = static_cast<int>(p.fwd_wh.value.cols());
  d.intentions = static_cast<int>(p.intent_w.value.rows());
  p.dims = d;

  if (p.fwd_wx.value.rows() != 4 * d.hidden || p.fwd_wx.value.cols() != d.embed_dim() ||
      p.out_w.value.cols() != d.feature_dim() || p.intent_w.value.cols() != d.state_dim() ||
      p.conv_w.value.cols() != d.char_width * d.char_dim)
    throw Error("checkpoint: inconsistent tensor shapes");
  return p;
}

void save_checkpoint(const std::string& path, const ModelParams<float>& params) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os)
      throw Error("cannot write checkpoint " + tmp);
    write_checkpoint(os, params);
  }
  std::filesystem::rename(tmp, path);
}

ModelParams<float> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw Error("cannot open checkpoint " + path);
  return read_checkpoint(is);
}

std::uint64_t parameter_hash(const ad::Parameter<float>& p) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  mix(p.name.data(), p.name.size());
  Eigen::Index dims[2] = {p.value.rows(), p.value.cols()};
  mix(dims, sizeof dims);
  mix(p.value.data(), sizeof(float) * static_cast<std::size_t>(p.value.size()));
  return h;
}

}  // namespace star
