#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include <Eigen/Sparse>

#include "mpsstab/core.hpp"

namespace mpsstab {

using SparseMatrix = Eigen::SparseMatrix<cplx>;

// Column-wise linear map: takes a dim x n block, returns a dim x n block.
using BlockMap = std::function<Matrix(const Matrix&)>;

// Mixed-radix tensor product space, big-endian (factor 0 most significant).
class ProductSpace {
 public:
  ProductSpace() = default;
  explicit ProductSpace(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
    strides_.resize(dims_.size());
    std::size_t s = 1;
    for (std::size_t i = dims_.size(); i-- > 0;) {
      if (dims_[i] == 0) throw Error("ProductSpace: zero factor dimension");
      strides_[i] = s;
      if (s > kStateCap * 64 / dims_[i]) throw CapExceeded("ProductSpace: dimension overflow");
      s *= dims_[i];
    }
    dim_ = s;
  }
  static ProductSpace uniform(std::size_t d, std::size_t n) {
    return ProductSpace(std::vector<std::size_t>(n, d));
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return dims_.size(); }
  std::size_t factor_dim(std::size_t i) const { return dims_.at(i); }
  std::size_t stride(std::size_t i) const { return strides_.at(i); }
  const std::vector<std::size_t>& dims() const { return dims_; }

 private:
  std::vector<std::size_t> dims_;
  std::vector<std::size_t> strides_;
  std::size_t dim_ = 1;
};

// An ordered list of factors of a ProductSpace. Operators placed here act on
// the listed factors (big-endian in the listed order) and as identity on the
// rest.
class Placement {
 public:
  Placement() = default;
  Placement(const ProductSpace& space, std::vector<std::size_t> factors)
      : factors_(std::move(factors)) {
    std::vector<bool> used(space.size(), false);
    local_offsets_ = {0};
    for (auto f : factors_) {
      if (f >= space.size() || used[f]) throw Error("Placement: invalid or repeated factor");
      used[f] = true;
      expand(local_offsets_, space.factor_dim(f), space.stride(f));
    }
    env_offsets_ = {0};
    for (std::size_t f = 0; f < space.size(); ++f)
      if (!used[f]) expand(env_offsets_, space.factor_dim(f), space.stride(f));
  }

  const std::vector<std::size_t>& factors() const { return factors_; }
  std::size_t local_dim() const { return local_offsets_.size(); }
  std::size_t env_count() const { return env_offsets_.size(); }
  std::size_t dim() const { return local_dim() * env_count(); }

  // Rearranges a global block column x into local_dim x env_count.
  Matrix gather(const cplx* x) const {
    const auto nl = static_cast<Eigen::Index>(local_offsets_.size());
    const auto ne = static_cast<Eigen::Index>(env_offsets_.size());
    Matrix X(nl, ne);
    for (Eigen::Index e = 0; e < ne; ++e) {
      const cplx* base = x + env_offsets_[e];
      for (Eigen::Index l = 0; l < nl; ++l) X(l, e) = base[local_offsets_[l]];
    }
    return X;
  }

  void scatter_add(const Matrix& Y, cplx* out, cplx coeff) const {
    const auto nl = static_cast<Eigen::Index>(local_offsets_.size());
    const auto ne = static_cast<Eigen::Index>(env_offsets_.size());
    for (Eigen::Index e = 0; e < ne; ++e) {
      cplx* base = out + env_offsets_[e];
      for (Eigen::Index l = 0; l < nl; ++l) base[local_offsets_[l]] += coeff * Y(l, e);
    }
  }

  // out += coeff * (op on these factors) in
  void apply_add(const Matrix& op, const cplx* in, cplx* out, cplx coeff = 1.0) const {
    Matrix Y = op * gather(in);
    scatter_add(Y, out, coeff);
  }

  void apply_add(const BlockMap& op, const cplx* in, cplx* out, cplx coeff = 1.0) const {
    Matrix Y = op(gather(in));
    scatter_add(Y, out, coeff);
  }

  Vector apply(const Matrix& op, const Vector& in) const {
    Vector out = Vector::Zero(in.size());
    apply_add(op, in.data(), out.data());
    return out;
  }

  void add_dense(const Matrix& op, Matrix& M, cplx coeff = 1.0) const {
    for (auto e : env_offsets_)
      for (std::size_t a = 0; a < local_offsets_.size(); ++a)
        for (std::size_t b = 0; b < local_offsets_.size(); ++b)
          M(static_cast<Eigen::Index>(local_offsets_[a] + e),
            static_cast<Eigen::Index>(local_offsets_[b] + e)) +=
              coeff * op(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
  }

  void add_triplets(const Matrix& op, std::vector<Eigen::Triplet<cplx>>& out, cplx coeff = 1.0) const {
    for (std::size_t a = 0; a < local_offsets_.size(); ++a)
      for (std::size_t b = 0; b < local_offsets_.size(); ++b) {
        cplx v = coeff * op(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
        if (std::abs(v) < 1e-300) continue;
        for (auto e : env_offsets_)
          out.emplace_back(static_cast<Eigen::Index>(local_offsets_[a] + e),
                           static_cast<Eigen::Index>(local_offsets_[b] + e), v);
      }
  }

 private:
  static void expand(std::vector<std::size_t>& offs, std::size_t d, std::size_t stride) {
    std::vector<std::size_t> next;
    next.reserve(offs.size() * d);
    for (auto o : offs)
      for (std::size_t v = 0; v < d; ++v) next.push_back(o + v * stride);
    offs.swap(next);
  }

  std::vector<std::size_t> factors_;
  std::vector<std::size_t> local_offsets_;
  std::vector<std::size_t> env_offsets_;
};

// Sum of dense local operators placed on a product space.
class LocalSum {
 public:
  struct Term {
    Placement placement;
    Matrix op;
    double coeff = 1.0;
  };

  LocalSum() = default;
  explicit LocalSum(ProductSpace space) : space_(std::move(space)) {}

  void add(std::vector<std::size_t> factors, Matrix op, double coeff = 1.0) {
    Placement p(space_, std::move(factors));
    if (op.rows() != static_cast<Eigen::Index>(p.local_dim()) || op.cols() != op.rows())
      throw Error("LocalSum::add: operator shape does not match placement");
    terms_.push_back({std::move(p), std::move(op), coeff});
  }

  const ProductSpace& space() const { return space_; }
  std::size_t dim() const { return space_.dim(); }
  const std::vector<Term>& terms() const { return terms_; }

  Vector apply(const Vector& x) const {
    Vector y = Vector::Zero(x.size());
    for (const auto& t : terms_) t.placement.apply_add(t.op, x.data(), y.data(), t.coeff);
    return y;
  }

  Matrix apply(const Matrix& X) const {
    Matrix Y = Matrix::Zero(X.rows(), X.cols());
    for (Eigen::Index c = 0; c < X.cols(); ++c)
      for (const auto& t : terms_)
        t.placement.apply_add(t.op, X.col(c).data(), Y.col(c).data(), t.coeff);
    return Y;
  }

  Matrix dense() const {
    if (dim() > kDenseLimit) throw CapExceeded("LocalSum::dense: dimension above dense limit");
    Matrix M = Matrix::Zero(static_cast<Eigen::Index>(dim()), static_cast<Eigen::Index>(dim()));
    for (const auto& t : terms_) t.placement.add_dense(t.op, M, t.coeff);
    return M;
  }

  SparseMatrix sparse() const {
    std::vector<Eigen::Triplet<cplx>> trip;
    for (const auto& t : terms_) t.placement.add_triplets(t.op, trip, t.coeff);
    SparseMatrix S(static_cast<Eigen::Index>(dim()), static_cast<Eigen::Index>(dim()));
    S.setFromTriplets(trip.begin(), trip.end());
    S.makeCompressed();
    return S;
  }

  BlockMap as_map() const {
    auto self = std::make_shared<const LocalSum>(*this);
    return [self](const Matrix& X) { return self->apply(X); };
  }

 private:
  ProductSpace space_;
  std::vector<Term> terms_;
};

// Applies the same local operator to each placement in turn, e.g. the
// product of block unitaries over a ring of blocks.
inline Matrix apply_product(const std::vector<Placement>& groups, const Matrix& op, const Matrix& X) {
  Matrix cur = X;
  for (const auto& p : groups) {
    Matrix next = Matrix::Zero(cur.rows(), cur.cols());
    for (Eigen::Index c = 0; c < cur.cols(); ++c) p.apply_add(op, cur.col(c).data(), next.col(c).data());
    cur.swap(next);
  }
  return cur;
}

}  // namespace mpsstab
