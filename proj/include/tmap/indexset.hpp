#pragma once

#include <algorithm>
#include <set>
#include <stdexcept>
#include <vector>

namespace tmap {

//! One multi-index: polynomial order per input dimension.
using MultiIndex = std::vector<int>;

inline int total_order(const MultiIndex& a) {
  int s = 0;
  for (int v : a) s += v;
  return s;
}

//! Downward-closed set of multi-indices over a fixed dimension.
//! Members are kept sorted lexicographically so iteration order (and hence
//! adaptation runs) is deterministic. Immutable: mutation returns a new set.
class MultiIndexSet {
public:
  MultiIndexSet(int dim, std::vector<MultiIndex> members)
      : dim_(dim), members_(std::move(members)) {
    if (dim_ < 1) throw std::invalid_argument("dimension must be positive");
    for (const auto& a : members_) {
      if (static_cast<int>(a.size()) != dim_)
        throw std::invalid_argument("multi-index dimension mismatch");
      for (int v : a)
        if (v < 0) throw std::invalid_argument("negative multi-index entry");
    }
    std::sort(members_.begin(), members_.end());
    members_.erase(std::unique(members_.begin(), members_.end()),
                   members_.end());
    if (!is_downward_closed())
      throw std::invalid_argument("index set is not downward closed");
  }

  int dim() const { return dim_; }
  std::size_t size() const { return members_.size(); }
  const std::vector<MultiIndex>& members() const { return members_; }
  const MultiIndex& operator[](std::size_t i) const { return members_[i]; }

  bool contains(const MultiIndex& a) const {
    return std::binary_search(members_.begin(), members_.end(), a);
  }

  //! All alpha not in the set whose coordinate-wise predecessors all are.
  std::vector<MultiIndex> reduced_margin() const {
    if (members_.empty()) throw std::invalid_argument("empty index set");
    std::set<MultiIndex> cand;
    for (const auto& a : members_) {
      for (int j = 0; j < dim_; ++j) {
        MultiIndex b = a;
        b[j] += 1;
        if (!contains(b) && predecessors_in_set(b)) cand.insert(b);
      }
    }
    return {cand.begin(), cand.end()};
  }

  //! Returns the set extended by alpha; alpha must lie in the reduced margin.
  MultiIndexSet add_index(const MultiIndex& a) const {
    if (static_cast<int>(a.size()) != dim_)
      throw std::invalid_argument("multi-index dimension mismatch");
    if (contains(a) || !predecessors_in_set(a))
      throw std::invalid_argument("closure violation");
    auto m = members_;
    m.push_back(a);
    return MultiIndexSet(dim_, std::move(m));
  }

  bool is_downward_closed() const {
    for (const auto& a : members_)
      if (!predecessors_in_set(a)) return false;
    return true;
  }

  int max_total_order() const {
    int m = 0;
    for (const auto& a : members_) m = std::max(m, total_order(a));
    return m;
  }

  int max_order() const {
    int m = 0;
    for (const auto& a : members_)
      for (int v : a) m = std::max(m, v);
    return m;
  }

private:
  bool predecessors_in_set(const MultiIndex& a) const {
    for (int j = 0; j < dim_; ++j) {
      if (a[j] == 0) continue;
      MultiIndex p = a;
      p[j] -= 1;
      if (!contains(p)) return false;
    }
    return true;
  }

  int dim_;
  std::vector<MultiIndex> members_;
};

} // namespace tmap
