#include "ect/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <vector>

#include "ect/error.hpp"

namespace ect {

namespace {

constexpr char kMagic[8] = {'E', 'C', 'T', 'C', 'K', 'P', 'T', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ostream& os, float f) { put_u32(os, std::bit_cast<std::uint32_t>(f)); }

struct Entry {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

class Reader {
 public:
  Reader(std::istream& is, std::string path) : is_(is), path_(std::move(path)) {}

  std::uint32_t u32(const char* what) {
    unsigned char b[4];
    read(b, 4, what);
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
  }

  void read(void* dst, std::size_t n, const char* what) {
    is_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n)
      throw FormatError("checkpoint " + path_ + ": truncated while reading " + what);
  }

 private:
  std::istream& is_;
  std::string path_;
};

std::vector<Entry> read_all(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("checkpoint " + path + ": cannot open");
  Reader r(is, path);
  char magic[8];
  r.read(magic, 8, "magic");
  if (std::memcmp(magic, kMagic, 8) != 0) throw FormatError("checkpoint " + path + ": bad magic");
  const std::uint32_t count = r.u32("entry count");
  std::vector<Entry> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    const std::uint32_t len = r.u32("name length");
    if (len > (1u << 16)) throw FormatError("checkpoint " + path + ": implausible name length");
    e.name.resize(len);
    r.read(e.name.data(), len, "name");
    const std::uint32_t rank = r.u32("rank");
    if (rank == 0 || rank > 8) throw FormatError("checkpoint " + path + ": bad rank for " + e.name);
    for (std::uint32_t d = 0; d < rank; ++d) e.shape.push_back(r.u32("extent"));
    const std::size_t numel = shape_numel(e.shape);
    if (numel == 0 || numel > (std::size_t{1} << 32)) throw FormatError("checkpoint " + path + ": bad shape for " + e.name);
    e.values.resize(numel);
    for (auto& v : e.values) v = std::bit_cast<float>(r.u32(e.name.c_str()));
    out.push_back(std::move(e));
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("checkpoint " + path + ": trailing bytes");
  return out;
}

template <typename T>
void assign(Tensor<T> dst, const Entry& e, const std::string& path) {
  if (dst.shape() != e.shape)
    throw FormatError("checkpoint " + path + ": shape mismatch for " + e.name + ": file " + shape_str(e.shape) +
                      ", model " + shape_str(dst.shape()));
  auto data = dst.mutable_data();
  for (std::size_t i = 0; i < e.values.size(); ++i) data[i] = static_cast<T>(e.values[i]);
}

}  // namespace

template <typename T>
void save_checkpoint(const ParamStore<T>& store, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("checkpoint " + path + ": cannot open for writing");
  os.write(kMagic, 8);
  put_u32(os, static_cast<std::uint32_t>(store.size()));
  for (const auto& [name, t] : store.entries()) {
    put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_u32(os, static_cast<std::uint32_t>(d));
    for (T v : t.data()) put_f32(os, static_cast<float>(v));
  }
  if (!os) throw FormatError("checkpoint " + path + ": write failed");
}

template <typename T>
void load_checkpoint(ParamStore<T>& store, const std::string& path) {
  auto entries = read_all(path);
  std::set<std::string> seen;
  for (const auto& e : entries) {
    if (!store.contains(e.name)) throw FormatError("checkpoint " + path + ": unknown parameter " + e.name);
    if (!seen.insert(e.name).second) throw FormatError("checkpoint " + path + ": duplicate parameter " + e.name);
  }
  for (const auto& [name, t] : store.entries())
    if (!seen.count(name)) throw FormatError("checkpoint " + path + ": missing parameter " + name);
  for (const auto& e : entries) assign(store.get(e.name), e, path);
}

template <typename T>
std::size_t load_partial(ParamStore<T>& store, const std::string& path) {
  auto entries = read_all(path);
  std::size_t loaded = 0;
  for (const auto& e : entries) {
    if (!store.contains(e.name)) continue;
    assign(store.get(e.name), e, path);
    ++loaded;
  }
  if (loaded == 0) throw FormatError("checkpoint " + path + ": no parameter names match the model");
  return loaded;
}

template void save_checkpoint(const ParamStore<float>&, const std::string&);
template void save_checkpoint(const ParamStore<double>&, const std::string&);
template void load_checkpoint(ParamStore<float>&, const std::string&);
template void load_checkpoint(ParamStore<double>&, const std::string&);
template std::size_t load_partial(ParamStore<float>&, const std::string&);
template std::size_t load_partial(ParamStore<double>&, const std::string&);

}  // namespace ect
