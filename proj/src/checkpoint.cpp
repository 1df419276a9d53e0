#include "gpldla/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace gpldla {

namespace {

constexpr std::array<char, 4> kMagic{'G', 'P', 'L', 'D'};

template <class T>
void put_le(std::ostream& out, T v) {
  static_assert(std::is_unsigned_v<T>);
  char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes, sizeof(T));
}

template <class T>
T get_le(std::istream& in, const char* what) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw CheckpointError(std::string("truncated checkpoint while reading ") + what);
  }
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes[i]) << (8 * i);
  return v;
}

constexpr std::uint32_t kMaxNameLength = 4096;
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kCheckpointVersion);
  for (const auto& t : tensors) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.value.rank()));
    for (auto e : t.value.shape()) put_le<std::uint64_t>(out, e);
    for (double x : t.value.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(x));
  }
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw CheckpointError(path.string() + ": not a checkpoint (bad magic)");
  }
  const auto version = get_le<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(path.string() + ": unsupported checkpoint version " +
                          std::to_string(version));
  }
  std::vector<NamedTensor> out;
  while (in.peek() != std::char_traits<char>::eof()) {
    const auto name_len = get_le<std::uint32_t>(in, "name length");
    if (name_len == 0 || name_len > kMaxNameLength) {
      throw CheckpointError(path.string() + ": invalid tensor name length");
    }
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw CheckpointError("truncated checkpoint name");
    const auto rank = get_le<std::uint32_t>(in, "rank");
    if (rank > 2) throw CheckpointError(path.string() + ": tensor " + name + " has rank > 2");
    Shape shape;
    std::uint64_t count = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      const auto e = get_le<std::uint64_t>(in, "extent");
      if (e > kMaxElements || (count *= std::max<std::uint64_t>(e, 1)) > kMaxElements) {
        throw CheckpointError(path.string() + ": tensor " + name + " is implausibly large");
      }
      shape.push_back(static_cast<std::size_t>(e));
    }
    std::vector<double> data(element_count(shape));
    for (double& x : data) x = std::bit_cast<double>(get_le<std::uint64_t>(in, "payload"));
    out.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  return out;
}

std::vector<NamedTensor> model_tensors(const Model& model) {
  std::vector<NamedTensor> out = model.backbone.tensors;
  out.push_back({"prior.log_beta", Tensor::scalar(model.prior.log_beta)});
  out.push_back({"prior.log_beta_b", Tensor::scalar(model.prior.log_beta_b)});
  out.push_back({"head.log_noise", Tensor::scalar(model.log_noise)});
  return out;
}

Model model_from_tensors(const std::vector<NamedTensor>& tensors, const BackboneSpec& spec,
                         HeadKind head) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& t : tensors) {
    if (!by_name.emplace(t.name, &t.value).second) {
      throw ValidationError("checkpoint repeats tensor " + t.name);
    }
  }
  // The expected layout comes from a freshly initialized model of this spec.
  Rng scratch(0);
  Model model = init_model(head, spec, scratch);
  auto expected = model_tensors(model);
  if (expected.size() != tensors.size()) {
    throw ValidationError("checkpoint holds " + std::to_string(tensors.size()) +
                          " tensors, backbone config expects " + std::to_string(expected.size()));
  }
  for (auto& e : expected) {
    auto it = by_name.find(e.name);
    if (it == by_name.end()) throw ValidationError("checkpoint lacks tensor " + e.name);
    if (it->second->shape() != e.value.shape()) {
      throw ValidationError("checkpoint tensor " + e.name + " has shape " +
                            shape_string(it->second->shape()) + ", config expects " +
                            shape_string(e.value.shape()));
    }
    e.value = *it->second;
  }
  for (std::size_t i = 0; i < model.backbone.tensors.size(); ++i) {
    model.backbone.tensors[i].value = expected[i].value;
  }
  const std::size_t n = model.backbone.tensors.size();
  model.prior.log_beta = expected[n].value.item();
  model.prior.log_beta_b = expected[n + 1].value.item();
  model.log_noise = expected[n + 2].value.item();
  return model;
}

}  // namespace gpldla
