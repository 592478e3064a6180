#include "mfeit/ad/checkpoint.hpp"

#include <map>
#include <string>

#include "mfeit/error.hpp"
#include "mfeit/io/binary.hpp"

namespace mfeit::ad {

namespace {

void put_entry(io::ByteWriter& w, const std::string& name, const Tensor& t) {
  w.u16(static_cast<std::uint16_t>(name.size()));
  w.bytes(std::span(reinterpret_cast<const std::uint8_t*>(name.data()), name.size()));
  w.u8(static_cast<std::uint8_t>(t.rank()));
  for (int d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
  for (double v : t.values()) w.f32(static_cast<float>(v));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params) {
  io::ByteWriter w;
  w.magic("MFEITW01");
  w.u32(static_cast<std::uint32_t>(params.params().size() + params.buffers().size()));
  for (const auto& p : params.params()) put_entry(w, p->name, p->value);
  for (const auto& [name, t] : params.buffers()) put_entry(w, name, *t);
  w.checksum();
  w.save(path);
}

void load_checkpoint(const std::filesystem::path& path, ParameterSet& params) {
  auto r = io::ByteReader::load(path);
  r.expect_magic("MFEITW01");
  const auto count = r.u32();
  std::map<std::string, Tensor> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    const auto len = r.u16();
    const auto raw = r.bytes(len);
    std::string name(raw.begin(), raw.end());
    const auto rank = r.u8();
    std::vector<int> shape(rank);
    std::uint64_t total = 1;
    for (auto& d : shape) {
      const auto v = r.u32();
      if (v > (1u << 28)) throw IoError("implausible dimension in entry '" + name + "' at offset " + std::to_string(at));
      d = static_cast<int>(v);
      total *= v;
    }
    if (total * 4 > r.size() - r.offset()) {
      throw IoError("entry '" + name + "' at offset " + std::to_string(at) + " runs past the end of the file");
    }
    Tensor t(shape);
    for (auto& v : t.values()) v = r.f32();
    if (!entries.emplace(name, std::move(t)).second) {
      throw IoError("duplicate entry '" + name + "' at offset " + std::to_string(at));
    }
  }
  r.verify_checksum();
  r.expect_end();

  auto take = [&](const std::string& name, Tensor& dst) {
    auto it = entries.find(name);
    if (it == entries.end()) throw IoError("checkpoint '" + path.string() + "' lacks entry '" + name + "'");
    if (!it->second.same_shape(dst)) {
      throw IoError("entry '" + name + "' has shape " + it->second.shape_string() + ", expected " + dst.shape_string());
    }
    dst = std::move(it->second);
    entries.erase(it);
  };
  for (const auto& p : params.params()) {
    take(p->name, p->value);
    p->zero_grad();
  }
  for (const auto& [name, t] : params.buffers()) take(name, *t);
  if (!entries.empty()) throw IoError("checkpoint has unexpected entry '" + entries.begin()->first + "'");
}

}  // namespace mfeit::ad
