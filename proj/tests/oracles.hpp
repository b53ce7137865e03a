#pragma once

// Independent reference implementations used only by the tests. None of these
// call into the library's algorithms they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "synprobe/common.hpp"
#include "synprobe/treebank.hpp"

namespace oracle {

/// Heads of a uniformly shaped random tree over t words: word 1 is the root
/// after relabeling by a random permutation, every other word attaches to an
/// earlier word in the permuted order.
inline std::vector<int> random_heads(int t, synprobe::Rng& rng) {
  std::vector<int> order(static_cast<std::size_t>(t));
  for (int i = 0; i < t; ++i) order[static_cast<std::size_t>(i)] = i + 1;
  rng.shuffle(order);
  std::vector<int> heads(static_cast<std::size_t>(t), 0);
  for (int k = 1; k < t; ++k) {
    const auto parent = order[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(k)))];
    heads[static_cast<std::size_t>(order[static_cast<std::size_t>(k)] - 1)] = parent;
  }
  return heads;
}

/// Path lengths from powers of the adjacency matrix: d(i, j) is the smallest
/// k with (A^k)_ij > 0.
inline Eigen::MatrixXd matrix_power_distances(const std::vector<int>& heads) {
  const int t = static_cast<int>(heads.size());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(t, t);
  for (int c = 0; c < t; ++c) {
    const int h = heads[static_cast<std::size_t>(c)];
    if (h > 0) {
      A(c, h - 1) = 1;
      A(h - 1, c) = 1;
    }
  }
  Eigen::MatrixXd D = Eigen::MatrixXd::Constant(t, t, -1);
  Eigen::MatrixXd P = Eigen::MatrixXd::Identity(t, t);
  for (int k = 0; k < t; ++k) {
    for (int i = 0; i < t; ++i) {
      for (int j = 0; j < t; ++j) {
        if (D(i, j) < 0 && P(i, j) > 0) D(i, j) = k;
      }
    }
    P = P * A;
  }
  return D;
}

/// Edge lists (0-based pairs, i < j) of every spanning tree of K_t, decoded
/// from all t^(t-2) Pruefer sequences.
inline std::vector<std::vector<std::pair<int, int>>> all_spanning_trees(int t) {
  std::vector<std::vector<std::pair<int, int>>> out;
  if (t == 1) {
    out.emplace_back();
    return out;
  }
  if (t == 2) {
    out.push_back({{0, 1}});
    return out;
  }
  std::vector<int> seq(static_cast<std::size_t>(t - 2), 0);
  while (true) {
    std::vector<int> degree(static_cast<std::size_t>(t), 1);
    for (int v : seq) ++degree[static_cast<std::size_t>(v)];
    std::vector<std::pair<int, int>> edges;
    for (int v : seq) {
      for (int leaf = 0; leaf < t; ++leaf) {
        if (degree[static_cast<std::size_t>(leaf)] == 1) {
          edges.emplace_back(std::min(leaf, v), std::max(leaf, v));
          --degree[static_cast<std::size_t>(leaf)];
          --degree[static_cast<std::size_t>(v)];
          break;
        }
      }
    }
    int u = -1;
    for (int v = 0; v < t; ++v) {
      if (degree[static_cast<std::size_t>(v)] == 1) {
        if (u < 0) {
          u = v;
        } else {
          edges.emplace_back(u, v);
          break;
        }
      }
    }
    std::sort(edges.begin(), edges.end());
    out.push_back(std::move(edges));
    std::size_t k = 0;
    while (k < seq.size() && ++seq[k] == t) seq[k++] = 0;
    if (k == seq.size()) break;
  }
  return out;
}

/// Minimum total weight over every spanning tree.
inline double brute_force_mst_weight(const Eigen::MatrixXd& w, std::vector<std::pair<int, int>>* best_edges = nullptr) {
  const int t = static_cast<int>(w.rows());
  double best = std::numeric_limits<double>::infinity();
  for (const auto& tree : all_spanning_trees(t)) {
    double sum = 0.0;
    for (const auto& [i, j] : tree) sum += w(i, j);
    if (sum < best) {
      best = sum;
      if (best_edges) *best_edges = tree;
    }
  }
  return best;
}

/// Central differences of a scalar function of a matrix.
inline Eigen::MatrixXd finite_difference(const std::function<double(const Eigen::MatrixXd&)>& f,
                                         const Eigen::MatrixXd& x, double step) {
  Eigen::MatrixXd grad(x.rows(), x.cols());
  Eigen::MatrixXd probe = x;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double orig = probe(i, j);
      probe(i, j) = orig + step;
      const double up = f(probe);
      probe(i, j) = orig - step;
      const double down = f(probe);
      probe(i, j) = orig;
      grad(i, j) = (up - down) / (2.0 * step);
    }
  }
  return grad;
}

/// Ridge weights from the explicit inverse of the regularized Gram matrix.
inline Eigen::VectorXd ridge_by_inverse(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double alpha) {
  const Eigen::MatrixXd gram = X.transpose() * X + alpha * Eigen::MatrixXd::Identity(X.cols(), X.cols());
  return gram.inverse() * (X.transpose() * y);
}

}  // namespace oracle
