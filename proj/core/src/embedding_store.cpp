#include "aurora/embedding_store.hpp"

#include <cstring>
#include <fstream>
#include <numeric>

#include "aurora/binary_io.hpp"
#include "aurora/errors.hpp"

namespace aurora {

namespace {

constexpr char kStoreMagic[4] = {'A', 'U', 'R', 'E'};
constexpr std::size_t kEmbedChunk = 512;

}  // namespace

void write_store(std::ostream& out, const EmbeddingSet& set) {
  set.validate();
  io::Writer w(out);
  w.bytes(kStoreMagic, 4);
  w.le(kStoreVersion);
  const std::size_t d = set.z.cols();
  w.le(static_cast<std::uint64_t>(set.size()));
  w.le(static_cast<std::uint32_t>(d));
  w.le(static_cast<std::uint32_t>(set.components.size()));
  for (std::size_t i = 0; i < set.size(); ++i) {
    w.le(set.ids[i]);
    for (std::size_t j = 0; j < d; ++j) w.le(static_cast<float>(set.z(i, j)));
    for (const auto& c : set.components)
      for (std::size_t j = 0; j < d; ++j) w.le(static_cast<float>(c(i, j)));
  }
  w.checksum();
}

void write_store(const std::string& path, const EmbeddingSet& set) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open '" + path + "' for writing");
  write_store(f, set);
}

EmbeddingSet read_store(std::istream& in) {
  io::Reader r(in);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kStoreMagic, 4) != 0) throw ConfigError("not an embedding store (bad magic)");
  const auto version = r.le<std::uint16_t>();
  if (version != kStoreVersion) throw ConfigError("unsupported store version " + std::to_string(version));
  const auto n = r.le<std::uint64_t>();
  const auto d = r.le<std::uint32_t>();
  const auto k = r.le<std::uint32_t>();
  if (n == 0 || d == 0 || n > (1ULL << 32) || k > 64) throw ConfigError("embedding store header is implausible");
  EmbeddingSet set;
  set.ids.resize(n);
  set.z = Tensor({n, d});
  set.components.assign(k, Tensor({n, d}));
  for (std::size_t i = 0; i < n; ++i) {
    set.ids[i] = r.le<std::uint64_t>();
    for (std::size_t j = 0; j < d; ++j) set.z(i, j) = r.le<float>();
    for (auto& c : set.components)
      for (std::size_t j = 0; j < d; ++j) c(i, j) = r.le<float>();
  }
  r.verify_checksum();
  return set;
}

EmbeddingSet read_store(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open embedding store '" + path + "'");
  return read_store(f);
}

EmbeddingSet embed(const ModelBundle& model, const Cohort& cohort, std::span<const std::size_t> rows) {
  if (cohort.config.p != model.config.input_dim)
    throw ConfigError("cohort has " + std::to_string(cohort.config.p) + " features but the checkpoint expects " +
                      std::to_string(model.config.input_dim));
  const std::size_t n = rows.size(), d = model.config.latent;
  EmbeddingSet set;
  set.z = Tensor({n, d});
  set.components.assign(model.config.subspaces, Tensor({n, d}));
  for (std::size_t b = 0; b < n; b += kEmbedChunk) {
    const std::size_t e = std::min(n, b + kEmbedChunk);
    const auto chunk = rows.subspan(b, e - b);
    const auto out = encode_batch(model, cohort.features(chunk));
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      std::copy(out.z.row(i).begin(), out.z.row(i).end(), set.z.row(b + i).begin());
      for (std::size_t k = 0; k < out.components.size(); ++k)
        std::copy(out.components[k].row(i).begin(), out.components[k].row(i).end(), set.components[k].row(b + i).begin());
    }
  }
  for (auto r : rows) set.ids.push_back(cohort.records.at(r).id);
  return set;
}

EmbeddingSet embed(const ModelBundle& model, const Cohort& cohort) {
  std::vector<std::size_t> rows(cohort.records.size());
  std::iota(rows.begin(), rows.end(), 0);
  return embed(model, cohort, rows);
}

EmbeddingSet round_to_f32(const EmbeddingSet& set) {
  EmbeddingSet out = set;
  auto round = [](Tensor& t) {
    for (auto& v : t.data()) v = static_cast<double>(static_cast<float>(v));
  };
  round(out.z);
  for (auto& c : out.components) round(c);
  return out;
}

}  // namespace aurora
