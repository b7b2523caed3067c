#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

#include "lyricrl/model/model.hpp"

namespace lyricrl::testing {

// Small enough for exhaustive finite differences (well under 1e3 parameters).
inline ModelConfig tiny_config(HeadKind head = HeadKind::LM) {
  ModelConfig c;
  c.vocab_size = 6;
  c.content_vocab = 4;
  c.eos_id = 5;
  c.embed_dim = 4;
  c.num_layers = 1;
  c.mlp_dim = 6;
  c.context_len = 12;
  c.head_kind = head;
  return c;
}

// Toy-task sized, but shallow enough to keep unit tests fast.
inline ModelConfig small_task_config(HeadKind head = HeadKind::LM) {
  ModelConfig c;
  c.embed_dim = 16;
  c.num_layers = 1;
  c.mlp_dim = 32;
  c.context_len = 160;
  c.head_kind = head;
  return c;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("lyricrl-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace lyricrl::testing
