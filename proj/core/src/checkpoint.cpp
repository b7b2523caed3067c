#include "lyricrl/numcore/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "lyricrl/numcore/errors.hpp"

namespace lyricrl {

namespace {

constexpr std::array<char, 8> kMagic{'L', 'R', 'L', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void put_le(std::vector<unsigned char>& out, T v) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::vector<unsigned char> bytes) : bytes_(std::move(bytes)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw CheckpointError("checkpoint truncated");
  }

  std::vector<unsigned char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamSet& params, std::uint64_t config_hash) {
  std::vector<unsigned char> out(kMagic.begin(), kMagic.end());
  put_le<std::uint32_t>(out, kCheckpointFormatVersion);
  put_le<std::uint64_t>(out, config_hash);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& e : params) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.value.rows()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.value.cols()));
    for (Eigen::Index k = 0; k < e.value.size(); ++k) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(e.value.data()[k]));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open checkpoint for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("failed writing checkpoint: " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r(std::move(bytes));
  if (r.get_string(kMagic.size()) != std::string(kMagic.begin(), kMagic.end())) {
    throw CheckpointError("bad checkpoint magic in " + path.string());
  }
  LoadedCheckpoint out;
  out.format_version = r.get<std::uint32_t>();
  if (out.format_version != kCheckpointFormatVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(out.format_version));
  }
  out.config_hash = r.get<std::uint64_t>();
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name = r.get_string(r.get<std::uint32_t>());
    const auto rows = r.get<std::uint32_t>();
    const auto cols = r.get<std::uint32_t>();
    const auto idx = out.params.add(name, rows, cols);
    auto& v = out.params[idx].value;
    for (Eigen::Index k = 0; k < v.size(); ++k) v.data()[k] = std::bit_cast<double>(r.get<std::uint64_t>());
  }
  if (!r.at_end()) throw CheckpointError("trailing bytes in checkpoint " + path.string());
  return out;
}

}  // namespace lyricrl
