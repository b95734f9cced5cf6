#include "artuda/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "artuda/errors.hpp"

namespace artuda::nn {

namespace {

constexpr char kMagic[8] = {'A', 'R', 'T', 'D', 'C', 'K', 'P', 'T'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) {
  put_u64(out, std::bit_cast<std::uint64_t>(d));
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw DataError("checkpoint: truncated file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

struct Entry {
  Shape shape;
  std::vector<double> values;
};

template <typename Fn>
void for_each_array(const UDAModel& model, Fn&& fn) {
  for_each_param(model, [&](const std::string& name, const Tensor& t) {
    fn(name, t.shape(), std::vector<double>(t.values().begin(), t.values().end()));
  });
  for (std::size_t i = 0; i < model.features.size(); ++i) {
    const auto& bn = model.features[i].bn;
    std::string p = "features." + std::to_string(i) + ".bn";
    fn(p + ".running_mean", Shape{bn.dim()}, bn.running_mean);
    fn(p + ".running_var", Shape{bn.dim()}, bn.running_var);
  }
}

std::string serialize(const UDAModel& model) {
  std::string out(kMagic, sizeof(kMagic));
  std::uint32_t count = 0;
  for_each_array(model, [&](const std::string&, const Shape&,
                            const std::vector<double>&) { ++count; });
  put_u32(out, count);
  for_each_array(model, [&](const std::string& name, const Shape& shape,
                            const std::vector<double>& values) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (std::size_t d : shape) put_u64(out, d);
    for (double v : values) put_f64(out, v);
  });
  return out;
}

}  // namespace

void save_checkpoint(const UDAModel& model,
                     const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("checkpoint: cannot open " + path.string());
  std::string bytes = serialize(model);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("checkpoint: write failed for " + path.string());
}

UDAModel load_checkpoint(const ModelSpec& spec,
                         const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("checkpoint: cannot open " + path.string());
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  Reader r{buf};
  if (r.str(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw DataError("checkpoint: bad magic in " + path.string());
  }
  std::uint32_t count = r.u32();
  std::map<std::string, Entry> entries;
  for (std::uint32_t e = 0; e < count; ++e) {
    std::string name = r.str(r.u32());
    std::uint32_t rank = r.u32();
    Shape shape;
    std::size_t numel = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      shape.push_back(static_cast<std::size_t>(r.u64()));
      numel *= shape.back();
    }
    std::vector<double> values(numel);
    for (double& v : values) v = r.f64();
    entries.emplace(std::move(name), Entry{std::move(shape), std::move(values)});
  }

  UDAModel model = init_params(spec, /*seed=*/0);
  auto take = [&](const std::string& name, const Shape& want) {
    auto it = entries.find(name);
    if (it == entries.end())
      throw DataError("checkpoint: missing array " + name);
    if (it->second.shape != want)
      throw DataError("checkpoint: array " + name + " has shape " +
                      shape_to_string(it->second.shape) + ", expected " +
                      shape_to_string(want));
    return std::move(it->second.values);
  };
  for_each_param(model, [&](const std::string& name, Tensor& t) {
    t = Tensor(t.shape(), take(name, t.shape()));
  });
  for (std::size_t i = 0; i < model.features.size(); ++i) {
    auto& bn = model.features[i].bn;
    std::string p = "features." + std::to_string(i) + ".bn";
    bn.running_mean = take(p + ".running_mean", Shape{bn.dim()});
    bn.running_var = take(p + ".running_var", Shape{bn.dim()});
  }
  return model;
}

std::uint64_t checkpoint_digest(const UDAModel& model) {
  std::string bytes = serialize(model);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace artuda::nn
