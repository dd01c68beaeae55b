#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "appgym/view_hierarchy.hpp"

namespace appgym::feat {

// Sparse real vector: sorted, unique indices.
struct SparseVector {
  std::vector<int> indices;
  std::vector<double> values;

  bool operator==(const SparseVector&) const = default;
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual const std::string& name() const = 0;
  virtual int dim() const = 0;
  virtual SparseVector embed(std::string_view text) const = 0;

  Eigen::VectorXd embed_dense(std::string_view text) const;
};

// Bag of hashed character trigrams over the lowercased text padded with one
// space on each side, L2-normalized. Empty text maps to the zero vector.
class HashTrigramEmbedder final : public Embedder {
 public:
  explicit HashTrigramEmbedder(int dim = 768);

  const std::string& name() const override { return name_; }
  int dim() const override { return dim_; }
  SparseVector embed(std::string_view text) const override;

 private:
  int dim_;
  std::string name_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<std::string, SparseVector> cache_;
};

inline constexpr std::string_view kDefaultEmbedder = "hash-trigram-768";

// Accepts "hash-trigram-<dim>". Throws std::invalid_argument otherwise.
std::shared_ptr<const Embedder> make_embedder(std::string_view name);

struct FeaturizerConfig {
  int n = 20;
  int loc_dim = 100;
  std::shared_ptr<const Embedder> embedder;

  int embed_dim() const { return embedder->dim(); }
  int width() const { return embed_dim() + 3 + loc_dim; }
};

FeaturizerConfig default_featurizer_config();

// n x m observation. Row i describes the element `action_map[i]`; rows
// without an element are zero. Rows are stored sparsely.
struct FeatureMatrix {
  int n = 0;
  int m = 0;
  std::vector<SparseVector> rows;
  std::vector<std::optional<vh::ElementRef>> action_map;

  int element_count() const;
  Eigen::MatrixXd dense() const;
  bool operator==(const FeatureMatrix&) const = default;
};

// Rows follow pre-order of actionable elements truncated to n. With `perm`
// (a permutation of 0..min(count, n)-1), row i holds element perm[i].
FeatureMatrix featurize(const vh::Screen& screen, const FeaturizerConfig& cfg,
                        const std::vector<int>* perm = nullptr);

// Uniform permutation of 0..count-1, a pure function of the seed.
std::vector<int> make_shuffle_perm(std::uint64_t seed, int count);

// Restriction of a permutation of 0..n-1 to the values below `count`, in
// order. Lets a per-episode permutation apply to screens of any size.
std::vector<int> induced_perm(const std::vector<int>& perm, int count);

void write_csv(const FeatureMatrix& fm, std::ostream& out);
// Little-endian: "AGFM", u32 n, u32 m, then n*m float64 row-major.
void write_binary(const FeatureMatrix& fm, std::ostream& out);
Eigen::MatrixXd read_binary(std::istream& in);

}  // namespace appgym::feat
