#include "textshield/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "textshield/errors.hpp"

namespace textshield::nn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint IO assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'T', 'S', 'C', 'K'};

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_str(std::string& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& source)
      : bytes_(bytes), source_(source) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string get_str(const char* what) {
    const auto n = get<std::uint32_t>(what);
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void read_doubles(double* dst, std::size_t n, const char* what) {
    need(n * sizeof(double), what);
    std::memcpy(dst, bytes_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(source_ + ": truncated checkpoint while reading " + what);
    }
  }

  const std::string& bytes_;
  const std::string& source_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize(const Checkpoint& ckpt) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put_str(out, ckpt.arch);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.meta.size()));
  for (const auto& [k, v] : ckpt.meta) {
    put_str(out, k);
    put_str(out, v);
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& p : ckpt.params.entries()) {
    put_str(out, p.name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) put<std::uint64_t>(out, d);
    out.append(reinterpret_cast<const char*>(p.value.data().data()),
               p.value.size() * sizeof(double));
  }
  return out;
}

Checkpoint deserialize(const std::string& bytes, const std::string& source) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw VersionError(source + ": not a checkpoint (bad magic)");
  }
  Reader r(bytes, source);
  r.get<std::uint32_t>("magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw VersionError(source + ": checkpoint version " + std::to_string(version) +
                       ", expected " + std::to_string(kCheckpointVersion));
  }
  Checkpoint ckpt;
  ckpt.arch = r.get_str("arch");
  const auto n_meta = r.get<std::uint32_t>("meta count");
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.get_str("meta key");
    ckpt.meta[k] = r.get_str("meta value");
  }
  const auto n_params = r.get<std::uint32_t>("parameter count");
  for (std::uint32_t i = 0; i < n_params; ++i) {
    std::string name = r.get_str("parameter name");
    const auto rank = r.get<std::uint32_t>("rank");
    if (rank > 4) throw FormatError(source + ": parameter '" + name + "' has rank " + std::to_string(rank));
    grad::Shape shape;
    std::size_t total = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back(r.get<std::uint64_t>("dimension"));
      total *= shape.back();
    }
    if (total > bytes.size()) throw FormatError(source + ": truncated checkpoint while reading values");
    grad::Tensor t(shape);
    r.read_doubles(t.data().data(), t.size(), "values");
    ckpt.params.add(std::move(name), std::move(t));
  }
  if (!r.done()) throw FormatError(source + ": trailing bytes after checkpoint");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  const std::string bytes = serialize(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("missing checkpoint " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str(), path);
}

void assign_params(ParamStore& target, const ParamStore& loaded) {
  if (target.size() != loaded.size()) {
    throw ShapeError("checkpoint has " + std::to_string(loaded.size()) +
                     " parameters, model expects " + std::to_string(target.size()));
  }
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target.name(i) != loaded.name(i) ||
        target[i].shape() != loaded[i].shape()) {
      throw ShapeError("checkpoint parameter '" + loaded.name(i) + "' " +
                       grad::to_string(loaded[i].shape()) + " does not match '" +
                       target.name(i) + "' " + grad::to_string(target[i].shape()));
    }
    target[i] = loaded[i];
  }
}

std::string meta_get(const Checkpoint& ckpt, const std::string& key) {
  auto it = ckpt.meta.find(key);
  if (it == ckpt.meta.end()) throw FormatError("checkpoint lacks meta key '" + key + "'");
  return it->second;
}

}  // namespace textshield::nn
