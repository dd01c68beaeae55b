#include "appgym/featurizer.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <stdexcept>

#include "appgym/rng.hpp"

namespace appgym::feat {

Eigen::VectorXd Embedder::embed_dense(std::string_view text) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(dim());
  const auto sparse = embed(text);
  for (std::size_t i = 0; i < sparse.indices.size(); ++i) {
    out[sparse.indices[i]] = sparse.values[i];
  }
  return out;
}

HashTrigramEmbedder::HashTrigramEmbedder(int dim)
    : dim_(dim), name_("hash-trigram-" + std::to_string(dim)) {
  if (dim <= 0) throw std::invalid_argument("embedder dim must be positive");
}

SparseVector HashTrigramEmbedder::embed(std::string_view text) const {
  if (text.empty()) return {};
  {
    std::lock_guard lock(mutex_);
    if (const auto it = cache_.find(std::string(text)); it != cache_.end()) return it->second;
  }
  std::string padded = " ";
  for (char c : text) {
    padded.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
  }
  padded.push_back(' ');

  std::map<int, double> counts;
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (std::size_t j = i; j < i + 3; ++j) {
      h ^= static_cast<unsigned char>(padded[j]);
      h *= 0x100000001b3ULL;
    }
    counts[static_cast<int>(h % static_cast<std::uint64_t>(dim_))] += 1.0;
  }
  double norm = 0.0;
  for (const auto& [index, count] : counts) norm += count * count;
  norm = std::sqrt(norm);
  SparseVector out;
  for (const auto& [index, count] : counts) {
    out.indices.push_back(index);
    out.values.push_back(count / norm);
  }
  std::lock_guard lock(mutex_);
  cache_.emplace(std::string(text), out);
  return out;
}

std::shared_ptr<const Embedder> make_embedder(std::string_view name) {
  constexpr std::string_view prefix = "hash-trigram-";
  if (name.starts_with(prefix)) {
    const auto digits = name.substr(prefix.size());
    int dim = 0;
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), dim);
    if (ec == std::errc() && ptr == digits.data() + digits.size() && dim > 0) {
      return std::make_shared<HashTrigramEmbedder>(dim);
    }
  }
  throw std::invalid_argument("unknown embedder: " + std::string(name));
}

FeaturizerConfig default_featurizer_config() {
  static const auto embedder = make_embedder(kDefaultEmbedder);
  return FeaturizerConfig{20, 100, embedder};
}

int FeatureMatrix::element_count() const {
  return static_cast<int>(
      std::count_if(action_map.begin(), action_map.end(), [](const auto& e) { return e.has_value(); }));
}

Eigen::MatrixXd FeatureMatrix::dense() const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, m);
  for (int r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < rows[r].indices.size(); ++i) {
      out(r, rows[r].indices[i]) = rows[r].values[i];
    }
  }
  return out;
}

FeatureMatrix featurize(const vh::Screen& screen, const FeaturizerConfig& cfg,
                        const std::vector<int>* perm) {
  auto elements = vh::actionable_elements(screen);
  if (static_cast<int>(elements.size()) > cfg.n) elements.resize(cfg.n);
  const int count = static_cast<int>(elements.size());
  if (perm && static_cast<int>(perm->size()) != count) {
    throw std::invalid_argument("shuffle permutation size does not match element count");
  }

  FeatureMatrix fm;
  fm.n = cfg.n;
  fm.m = cfg.width();
  fm.rows.resize(cfg.n);
  fm.action_map.resize(cfg.n);
  const int flag_offset = cfg.embed_dim();
  const int loc_offset = flag_offset + 3;
  for (int row = 0; row < count; ++row) {
    const auto& element = elements[perm ? (*perm)[row] : row];
    const std::string& description =
        element.text.empty() && element.editable ? element.edit_buffer : element.text;
    SparseVector features = cfg.embedder->embed(description);
    const auto push = [&](int index, double value) {
      if (value != 0.0) {
        features.indices.push_back(index);
        features.values.push_back(value);
      }
    };
    push(flag_offset, element.clickable ? 1.0 : 0.0);
    push(flag_offset + 1, element.editable ? 1.0 : 0.0);
    push(flag_offset + 2, 1.0);
    push(loc_offset + std::min(element.preorder_index, cfg.loc_dim - 1), 1.0);
    fm.rows[row] = std::move(features);
    fm.action_map[row] = element;
  }
  return fm;
}

std::vector<int> make_shuffle_perm(std::uint64_t seed, int count) {
  std::vector<int> perm(static_cast<std::size_t>(std::max(count, 0)));
  for (int i = 0; i < count; ++i) perm[i] = i;
  Rng rng(seed);
  shuffle_in_place(perm, rng);
  return perm;
}

std::vector<int> induced_perm(const std::vector<int>& perm, int count) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int value : perm) {
    if (value < count) out.push_back(value);
  }
  if (static_cast<int>(out.size()) != count) {
    throw std::invalid_argument("permutation shorter than element count");
  }
  return out;
}

void write_csv(const FeatureMatrix& fm, std::ostream& out) {
  const Eigen::MatrixXd dense = fm.dense();
  out << "row,node_id";
  for (int c = 0; c < fm.m; ++c) out << ",f" << c;
  out << '\n';
  char buffer[32];
  for (int r = 0; r < fm.n; ++r) {
    out << r << ',' << (fm.action_map[r] ? fm.action_map[r]->node_id : "");
    for (int c = 0; c < fm.m; ++c) {
      const auto [end, ec] = std::to_chars(buffer, buffer + sizeof buffer, dense(r, c));
      out << ',' << std::string_view(buffer, end - buffer);
    }
    out << '\n';
  }
}

namespace {

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts unsupported");
  out.write(reinterpret_cast<const char*>(&value), sizeof value);
}

template <typename T>
T get_le(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof value);
  if (!in) throw std::runtime_error("truncated feature matrix file");
  return value;
}

}  // namespace

void write_binary(const FeatureMatrix& fm, std::ostream& out) {
  out.write("AGFM", 4);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(fm.n));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(fm.m));
  const Eigen::MatrixXd dense = fm.dense();
  for (int r = 0; r < fm.n; ++r) {
    for (int c = 0; c < fm.m; ++c) put_le<double>(out, dense(r, c));
  }
}

Eigen::MatrixXd read_binary(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string_view(magic, 4) != "AGFM") {
    throw std::runtime_error("not a feature matrix file");
  }
  const auto n = get_le<std::uint32_t>(in);
  const auto m = get_le<std::uint32_t>(in);
  Eigen::MatrixXd out(n, m);
  for (std::uint32_t r = 0; r < n; ++r) {
    for (std::uint32_t c = 0; c < m; ++c) out(r, c) = get_le<double>(in);
  }
  return out;
}

}  // namespace appgym::feat
