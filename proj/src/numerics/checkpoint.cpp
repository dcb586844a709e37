#include "todkat/numerics/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace todkat {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& b) : bytes_(b) {}
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_bytes(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw std::runtime_error("checkpoint truncated at byte " + std::to_string(pos_));
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const std::vector<NamedArray>& arrays) {
  std::string out = "TDK1";
  put<std::uint32_t>(out, kCheckpointVersion);
  for (const auto& a : arrays) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
    out += a.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.shape.size()));
    for (auto e : a.shape) put<std::uint64_t>(out, e);
    for (double v : a.values) put<double>(out, v);
  }
  return out;
}

std::vector<NamedArray> decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 8 || bytes.compare(0, 4, "TDK1") != 0) {
    throw std::runtime_error("not a TDK1 checkpoint");
  }
  Reader r(bytes);
  r.get_bytes(4);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  std::vector<NamedArray> out;
  while (!r.done()) {
    NamedArray a;
    a.name = r.get_bytes(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < rank; ++i) a.shape.push_back(r.get<std::uint64_t>());
    a.values.resize(shape_numel(a.shape));
    for (auto& v : a.values) v = r.get<double>();
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<NamedArray> to_arrays(const ParameterStore& store) {
  std::vector<NamedArray> arrays;
  for (const auto& e : store.entries()) {
    arrays.push_back({e.name, e.tensor.shape(), {e.tensor.values().begin(), e.tensor.values().end()}});
  }
  return arrays;
}

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write checkpoint " + path.string());
  const auto bytes = encode_checkpoint(to_arrays(store));
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::vector<NamedArray> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_checkpoint(ss.str());
}

void load_checkpoint(const std::filesystem::path& path, ParameterStore& store) {
  const auto arrays = read_checkpoint(path);
  for (auto& e : store.entries()) {
    const NamedArray* found = nullptr;
    for (const auto& a : arrays) {
      if (a.name == e.name) found = &a;
    }
    if (!found) throw std::runtime_error("checkpoint " + path.string() + " lacks parameter " + e.name);
    if (found->shape != e.tensor.shape()) {
      throw DimensionError("checkpoint parameter " + e.name + " has shape " + shape_str(found->shape) +
                           ", model expects " + shape_str(e.tensor.shape()));
    }
    auto dst = e.tensor.mutable_values();
    std::copy(found->values.begin(), found->values.end(), dst.begin());
  }
}

}  // namespace todkat
