#include "slsrec/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "slsrec/error.hpp"

namespace slsrec {

namespace {

constexpr std::array<char, 8> kMagic = {'S', 'L', 'S', 'R', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::ostream& out, T v) {
  static_assert(std::is_unsigned_v<T>);
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) throw IoError("checkpoint truncated");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
  return v;
}

void put_string(std::ostream& out, const std::string& s, bool wide) {
  if (wide) put<std::uint64_t>(out, s.size());
  else put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in, bool wide) {
  const std::uint64_t n = wide ? get<std::uint64_t>(in) : get<std::uint32_t>(in);
  if (n > (1ULL << 32)) throw IoError("checkpoint string length out of range");
  std::string s(n, '\0');
  if (n && !in.read(s.data(), static_cast<std::streamsize>(n))) throw IoError("checkpoint truncated");
  return s;
}

}  // namespace

CheckpointVersionError::CheckpointVersionError(std::uint32_t f, std::uint32_t s)
    : IoError("checkpoint format version " + std::to_string(f) + " is not supported (this build reads version " +
              std::to_string(s) + ")"),
      found(f),
      supported(s) {}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, ckpt.header.version);
  put<std::uint32_t>(out, ckpt.header.d);
  put<std::uint32_t>(out, ckpt.header.item_count);
  put<std::uint32_t>(out, ckpt.header.l);
  put<std::uint32_t>(out, ckpt.header.k_max);
  put_string(out, ckpt.config_text, true);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.params.size()));
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    const auto& p = ckpt.params[i];
    put_string(out, p.name, false);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.rows()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.cols()));
    for (Eigen::Index r = 0; r < p.value.rows(); ++r)
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(p.value(r, c)));
  }
  if (!out) throw IoError("failed writing checkpoint");
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create checkpoint: " + path.string());
  write_checkpoint(out, ckpt);
}

Checkpoint read_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw IoError("not an slsrec checkpoint (bad magic)");
  Checkpoint ckpt;
  ckpt.header.version = get<std::uint32_t>(in);
  if (ckpt.header.version != kCheckpointVersion) throw CheckpointVersionError(ckpt.header.version, kCheckpointVersion);
  ckpt.header.d = get<std::uint32_t>(in);
  ckpt.header.item_count = get<std::uint32_t>(in);
  ckpt.header.l = get<std::uint32_t>(in);
  ckpt.header.k_max = get<std::uint32_t>(in);
  ckpt.config_text = get_string(in, true);
  const std::uint32_t count = get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = get_string(in, false);
    const std::uint32_t rows = get<std::uint32_t>(in);
    const std::uint32_t cols = get<std::uint32_t>(in);
    if (static_cast<std::uint64_t>(rows) * cols > (1ULL << 31)) throw IoError("checkpoint tensor too large: " + name);
    Mat m(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = std::bit_cast<double>(get<std::uint64_t>(in));
    ckpt.params.add(name, std::move(m));
  }
  const auto& emb = ckpt.params.get("item_embedding").value;
  if (emb.rows() != ckpt.header.item_count || emb.cols() != ckpt.header.d) {
    throw IoError("checkpoint item_embedding shape disagrees with header");
  }
  return ckpt;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  return read_checkpoint(in);
}

}  // namespace slsrec
