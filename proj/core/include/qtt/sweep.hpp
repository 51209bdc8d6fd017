#pragma once

#include <memory>

#include "qtt/dlra.hpp"
#include "qtt/tt_build.hpp"

namespace qtt {

// Reduced per-site (or per-bond, or two-site) context handed to a problem's
// right-hand-side assembler.  Cores are passed flattened; apply_term maps the
// in-field core of term k through its effective operator, aux_apply multiplies
// by an auxiliary grid function in the reduced coordinates (elementwise for
// the sampled flavors, a projected diagonal operator for G).
template <class T>
struct SiteBlock {
  int site = 0;
  bool is_bond = false;
  Flavor flavor = Flavor::G;
  std::vector<std::array<Index, 3>> field_dims;  // (rl, d, rr) per field
  std::function<Vec<T>(int, const Vec<T>&)> apply_term;
  std::function<Vec<T>(int, const Vec<T>&)> aux_apply;
  std::vector<Vec<T>> source_eff;
  std::function<Mat<T>(int)> term_matrix;

  Index dim(int f) const {
    const auto& d = field_dims[static_cast<size_t>(f)];
    return d[0] * d[1] * d[2];
  }
};

namespace detail {

template <class T>
Tensor3<T> contract_pair(const Tensor3<T>& a, const Tensor3<T>& b) {
  if (a.r1 != b.r0) throw shape_error("contract_pair: bond mismatch");
  Tensor3<T> out(a.r0, a.d * b.d, b.r1);
  for (Index sa = 0; sa < a.d; ++sa)
    for (Index sb = 0; sb < b.d; ++sb) {
      Mat<T> prod = Mat<T>(a.slice(sa)) * Mat<T>(b.slice(sb));
      for (Index x = 0; x < a.r0; ++x)
        for (Index y = 0; y < b.r1; ++y) out(x, sa * b.d + sb, y) = prod(x, y);
    }
  return out;
}

template <class T>
class SweepEngine {
 public:
  SweepEngine(std::vector<TtVector<T>>& states, const DlrSystem<T>& sys, const SweepPlan& plan)
      : states_(states), sys_(sys), plan_(plan) {
    plan_.validate();
    nf_ = sys_.n_fields;
    if (int(states_.size()) != nf_) throw shape_error("dlr_step: field count mismatch");
    L_ = states_.front().length();
    for (const auto& s : states_)
      if (s.length() != L_) throw shape_error("dlr_step: train length mismatch");
    if (L_ < 2) throw shape_error("dlr_step: at least two sites required");
    for (const auto& term : sys_.terms)
      if (term.op.length() != L_) throw shape_error("dlr_step: operator length mismatch");
    if (plan_.flavor == Flavor::G)
      for (const auto& a : sys_.aux) aux_diag_.push_back(diag_op(a.tt));
    envL_.assign(sys_.terms.size(), {});
    envR_.assign(sys_.terms.size(), {});
    denvL_.assign(aux_diag_.size(), {});
    denvR_.assign(aux_diag_.size(), {});
    aenvL_.assign(plan_.flavor == Flavor::G ? 0 : sys_.aux.size(), {});
    aenvR_.assign(plan_.flavor == Flavor::G ? 0 : sys_.aux.size(), {});
    senvL_.assign(sys_.sources.size(), {});
    senvR_.assign(sys_.sources.size(), {});
  }

  DiagnosticsRecord run(double t, double dt) {
    // a nonzero source has to be representable on the swept manifold: widen
    // the initial basis with the source's own
    for (const auto& src : sys_.sources)
      states_[static_cast<size_t>(src.field)] =
          add(states_[static_cast<size_t>(src.field)], scale(src.tt, T(0)));

    const SweepDir dir = plan_.direction;
    prepare(dir);
    if (plan_.scheme == Scheme::AP) {
      ap_sweep(t, dt, dir);
    } else if (!plan_.two_site) {
      // symmetric composition of two half-sweeps in opposite directions
      ps_sweep(t, dt / 2, dir);
      ps_sweep(t + dt / 2, dt / 2, opposite(dir));
    } else {
      ps2_sweep(t, dt / 2, dir);
      ps2_sweep(t + dt / 2, dt / 2, opposite(dir));
    }

    DiagnosticsRecord rec;
    rec.flavor = to_string(plan_.flavor);
    rec.scheme = to_string(plan_.scheme);
    rec.stepper = to_string(plan_.stepper);
    for (const auto& s : states_) rec.r_in = std::max(rec.r_in, s.max_rank());
    for (auto& s : states_) truncate(s, plan_.eps, plan_.r_max, plan_.r_min);
    for (const auto& s : states_) rec.r = std::max(rec.r, s.max_rank());
    rec.n_eval = n_eval_;
    return rec;
  }

 private:
  std::vector<TtVector<T>>& states_;
  const DlrSystem<T>& sys_;
  SweepPlan plan_;
  int L_ = 0, nf_ = 1;
  long long n_eval_ = 0;

  std::vector<TtOperator<T>> aux_diag_;
  std::vector<std::vector<Tensor3<T>>> envL_, envR_;    // per term
  std::vector<std::vector<Tensor3<T>>> denvL_, denvR_;  // per aux (G)
  std::vector<std::vector<Mat<T>>> aenvL_, aenvR_;      // per aux (X/P)
  std::vector<std::vector<Mat<T>>> senvL_, senvR_;      // per source

  static SweepDir opposite(SweepDir d) {
    return d == SweepDir::LeftToRight ? SweepDir::RightToLeft : SweepDir::LeftToRight;
  }
  bool sampled() const { return plan_.flavor != Flavor::G; }
  Form form() const {
    return plan_.flavor == Flavor::X ? Form::Interpolative : Form::Orthonormal;
  }
  TtVector<T>& st(int f) { return states_[static_cast<size_t>(f)]; }
  const Tensor3<T>& core(int f, int p) const {
    return states_[static_cast<size_t>(f)].cores[static_cast<size_t>(p)];
  }

  // --- environment upkeep --------------------------------------------------

  Tensor3<T> envl_step(const Tensor3<T>& e, int bra_field, const Tensor4<T>& op, int ket_field,
                       int p) const {
    const auto& bra = states_[static_cast<size_t>(bra_field)];
    const auto& ket_core = states_[static_cast<size_t>(ket_field)].cores[static_cast<size_t>(p)];
    const auto& bra_core = bra.cores[static_cast<size_t>(p)];
    if (plan_.flavor == Flavor::G) return envl_step_g(e, bra_core, op, ket_core);
    return envl_step_x(e, bra.lsel_rows[static_cast<size_t>(p + 1)], bra_core.d, op, ket_core);
  }

  Tensor3<T> envr_step(const Tensor3<T>& e, int bra_field, const Tensor4<T>& op, int ket_field,
                       int p) const {
    const auto& bra = states_[static_cast<size_t>(bra_field)];
    const auto& ket_core = states_[static_cast<size_t>(ket_field)].cores[static_cast<size_t>(p)];
    const auto& bra_core = bra.cores[static_cast<size_t>(p)];
    if (plan_.flavor == Flavor::G) return envr_step_g(e, bra_core, op, ket_core);
    return envr_step_x(e, bra.rsel_cols[static_cast<size_t>(p)], bra_core.r1, op, ket_core);
  }

  Mat<T> venvl_step(const Mat<T>& e, int bra_field, const Tensor3<T>& vec, int p,
                    bool sampled_bra) const {
    const auto& bra = states_[static_cast<size_t>(bra_field)];
    const auto& bc = bra.cores[static_cast<size_t>(p)];
    if (sampled_bra)
      return venvl_step_x(e, bra.lsel_rows[static_cast<size_t>(p + 1)], bc.d, vec);
    return venvl_step_g(e, bc, vec);
  }

  Mat<T> venvr_step(const Mat<T>& e, int bra_field, const Tensor3<T>& vec, int p,
                    bool sampled_bra) const {
    const auto& bra = states_[static_cast<size_t>(bra_field)];
    const auto& bc = bra.cores[static_cast<size_t>(p)];
    if (sampled_bra)
      return venvr_step_x(e, bra.rsel_cols[static_cast<size_t>(p)], bc.r1, vec);
    return venvr_step_g(e, bc, vec);
  }

  // sources use the bra style of the flavor's vector projection (Galerkin for
  // G and P, samples for X); aux masks are always sampled for X and P
  bool source_sampled() const { return plan_.flavor == Flavor::X; }

  void prepare(SweepDir dir) {
    const int start = dir == SweepDir::LeftToRight ? 0 : L_ - 1;
    for (auto& s : states_) canonicalize(s, start, form(), 0.0, 1, plan_.flavor == Flavor::P);
    const size_t nt = sys_.terms.size();
    for (size_t k = 0; k < nt; ++k) {
      envL_[k].assign(static_cast<size_t>(L_ + 1), Tensor3<T>());
      envR_[k].assign(static_cast<size_t>(L_ + 1), Tensor3<T>());
      envL_[k][0] = env_ones<T>();
      envR_[k][static_cast<size_t>(L_)] = env_ones<T>();
    }
    for (size_t j = 0; j < denvL_.size(); ++j) {
      denvL_[j].assign(static_cast<size_t>(L_ + 1), Tensor3<T>());
      denvR_[j].assign(static_cast<size_t>(L_ + 1), Tensor3<T>());
      denvL_[j][0] = env_ones<T>();
      denvR_[j][static_cast<size_t>(L_)] = env_ones<T>();
    }
    for (size_t j = 0; j < aenvL_.size(); ++j) {
      aenvL_[j].assign(static_cast<size_t>(L_ + 1), Mat<T>());
      aenvR_[j].assign(static_cast<size_t>(L_ + 1), Mat<T>());
      aenvL_[j][0] = Mat<T>::Ones(1, 1);
      aenvR_[j][static_cast<size_t>(L_)] = Mat<T>::Ones(1, 1);
    }
    for (size_t j = 0; j < senvL_.size(); ++j) {
      senvL_[j].assign(static_cast<size_t>(L_ + 1), Mat<T>());
      senvR_[j].assign(static_cast<size_t>(L_ + 1), Mat<T>());
      senvL_[j][0] = Mat<T>::Ones(1, 1);
      senvR_[j][static_cast<size_t>(L_)] = Mat<T>::Ones(1, 1);
    }
    if (dir == SweepDir::LeftToRight) {
      for (int p = L_ - 1; p >= 1; --p) advance_right(p);
    } else {
      for (int p = 0; p <= L_ - 2; ++p) advance_left(p);
    }
  }

  // build envs at bond p from bond p+1 (right chains, covering sites >= p)
  void advance_right(int p) {
    for (size_t k = 0; k < sys_.terms.size(); ++k) {
      const auto& term = sys_.terms[k];
      envR_[k][static_cast<size_t>(p)] =
          envr_step(envR_[k][static_cast<size_t>(p + 1)], term.out_field,
                    term.op.cores[static_cast<size_t>(p)], term.in_field, p);
    }
    for (size_t j = 0; j < denvL_.size(); ++j) {
      const int f = sys_.aux[j].at_field;
      denvR_[j][static_cast<size_t>(p)] =
          envr_step(denvR_[j][static_cast<size_t>(p + 1)], f,
                    aux_diag_[j].cores[static_cast<size_t>(p)], f, p);
    }
    for (size_t j = 0; j < aenvL_.size(); ++j)
      aenvR_[j][static_cast<size_t>(p)] =
          venvr_step(aenvR_[j][static_cast<size_t>(p + 1)], sys_.aux[j].at_field,
                     sys_.aux[j].tt.cores[static_cast<size_t>(p)], p, true);
    for (size_t j = 0; j < senvL_.size(); ++j)
      senvR_[j][static_cast<size_t>(p)] =
          venvr_step(senvR_[j][static_cast<size_t>(p + 1)], sys_.sources[j].field,
                     sys_.sources[j].tt.cores[static_cast<size_t>(p)], p, source_sampled());
  }

  // build envs at bond p+1 from bond p (left chains, covering sites <= p)
  void advance_left(int p) {
    for (size_t k = 0; k < sys_.terms.size(); ++k) {
      const auto& term = sys_.terms[k];
      envL_[k][static_cast<size_t>(p + 1)] =
          envl_step(envL_[k][static_cast<size_t>(p)], term.out_field,
                    term.op.cores[static_cast<size_t>(p)], term.in_field, p);
    }
    for (size_t j = 0; j < denvL_.size(); ++j) {
      const int f = sys_.aux[j].at_field;
      denvL_[j][static_cast<size_t>(p + 1)] =
          envl_step(denvL_[j][static_cast<size_t>(p)], f,
                    aux_diag_[j].cores[static_cast<size_t>(p)], f, p);
    }
    for (size_t j = 0; j < aenvL_.size(); ++j)
      aenvL_[j][static_cast<size_t>(p + 1)] =
          venvl_step(aenvL_[j][static_cast<size_t>(p)], sys_.aux[j].at_field,
                     sys_.aux[j].tt.cores[static_cast<size_t>(p)], p, true);
    for (size_t j = 0; j < senvL_.size(); ++j)
      senvL_[j][static_cast<size_t>(p + 1)] =
          venvl_step(senvL_[j][static_cast<size_t>(p)], sys_.sources[j].field,
                     sys_.sources[j].tt.cores[static_cast<size_t>(p)], p, source_sampled());
  }

  // --- oblique conversions ---------------------------------------------------

  Tensor3<T> to_sampled(int f, int bl, int br, const Tensor3<T>& mq) const {
    const auto& s = states_[static_cast<size_t>(f)];
    return mode2_mul(mode0_mul(s.lsel_mat[static_cast<size_t>(bl)], mq),
                     s.rsel_mat[static_cast<size_t>(br)]);
  }
  Tensor3<T> from_sampled(int f, int bl, int br, const Tensor3<T>& mx) const {
    const auto& s = states_[static_cast<size_t>(f)];
    return mode2_mul(mode0_mul(s.lsel_inv[static_cast<size_t>(bl)], mx),
                     s.rsel_inv[static_cast<size_t>(br)]);
  }

  // --- site / bond / two-site blocks ----------------------------------------

  // spans: bond_l(f), bond_r(f), and op core(s).  width = 1 site, 0 = bond,
  // 2 = supercore
  std::shared_ptr<SiteBlock<T>> make_block(int site, int width) {
    auto blk = std::make_shared<SiteBlock<T>>();
    blk->site = site;
    blk->is_bond = width == 0;
    blk->flavor = plan_.flavor;
    const int bl = site, br = site + width;
    blk->field_dims.resize(static_cast<size_t>(nf_));
    for (int f = 0; f < nf_; ++f) {
      // during the factor/absorb window a bond can be rectangular: read the
      // left dimension from the left core and the right one from the right
      Index rl, rr, d = 1;
      if (width == 0) {
        rl = site == 0 ? 1 : core(f, site - 1).r1;
        rr = site == L_ ? 1 : core(f, site).r0;
      } else {
        rl = core(f, site).r0;
        rr = core(f, site + width - 1).r1;
        for (int w = 0; w < width; ++w) d *= core(f, site + w).d;
      }
      blk->field_dims[static_cast<size_t>(f)] = {rl, d, rr};
    }
    // fused operator cores for the two-site variant
    auto fused = std::make_shared<std::vector<Tensor4<T>>>();
    if (width == 2)
      for (const auto& term : sys_.terms)
        fused->push_back(fuse_op_pair(term.op.cores[static_cast<size_t>(site)],
                                      term.op.cores[static_cast<size_t>(site + 1)]));

    auto self = this;
    blk->apply_term = [self, blk, site, width, bl, br, fused](int k, const Vec<T>& in) -> Vec<T> {
      const auto& term = self->sys_.terms[static_cast<size_t>(k)];
      const auto& dims = blk->field_dims[static_cast<size_t>(term.in_field)];
      Tensor3<T> m = Tensor3<T>::from_vector(in, dims[0], dims[1], dims[2]);
      if (self->plan_.flavor == Flavor::P) m = self->from_sampled(term.in_field, bl, br, m);
      Tensor3<T> out;
      const auto& el = self->envL_[static_cast<size_t>(k)][static_cast<size_t>(bl)];
      const auto& er = self->envR_[static_cast<size_t>(k)][static_cast<size_t>(br)];
      if (width == 0) {
        Mat<T> w(dims[0], dims[2]);
        for (Index a = 0; a < dims[0]; ++a)
          for (Index b = 0; b < dims[2]; ++b) w(a, b) = m(a, 0, b);
        Mat<T> o = apply_bond(el, er, w);
        out = Tensor3<T>(o.rows(), 1, o.cols());
        for (Index a = 0; a < o.rows(); ++a)
          for (Index b = 0; b < o.cols(); ++b) out(a, 0, b) = o(a, b);
      } else if (width == 1) {
        out = apply_site(el, term.op.cores[static_cast<size_t>(site)], er, m);
      } else {
        out = apply_site(el, (*fused)[static_cast<size_t>(k)], er, m);
      }
      return out.as_vector();
    };

    // auxiliary mask: sampled values for X/P, projected diagonal operator for G
    if (plan_.flavor == Flavor::G) {
      blk->aux_apply = [self, blk, site, width, bl, br](int j, const Vec<T>& in) -> Vec<T> {
        const int f = self->sys_.aux[static_cast<size_t>(j)].at_field;
        const auto& dims = blk->field_dims[static_cast<size_t>(f)];
        Tensor3<T> m = Tensor3<T>::from_vector(in, dims[0], dims[1], dims[2]);
        const auto& el = self->denvL_[static_cast<size_t>(j)][static_cast<size_t>(bl)];
        const auto& er = self->denvR_[static_cast<size_t>(j)][static_cast<size_t>(br)];
        Tensor3<T> out;
        if (width == 0) {
          Mat<T> w(dims[0], dims[2]);
          for (Index a = 0; a < dims[0]; ++a)
            for (Index b = 0; b < dims[2]; ++b) w(a, b) = m(a, 0, b);
          Mat<T> o = apply_bond(el, er, w);
          out = Tensor3<T>(o.rows(), 1, o.cols());
          for (Index a = 0; a < o.rows(); ++a)
            for (Index b = 0; b < o.cols(); ++b) out(a, 0, b) = o(a, b);
        } else if (width == 1) {
          out = apply_site(el, self->aux_diag_[static_cast<size_t>(j)].cores[static_cast<size_t>(site)],
                           er, m);
        } else {
          auto fop = fuse_op_pair(self->aux_diag_[static_cast<size_t>(j)].cores[static_cast<size_t>(site)],
                                  self->aux_diag_[static_cast<size_t>(j)].cores[static_cast<size_t>(site + 1)]);
          out = apply_site(el, fop, er, m);
        }
        return out.as_vector();
      };
    } else {
      // precompute sampled aux values once per block
      auto aux_vals = std::make_shared<std::vector<Vec<T>>>();
      for (size_t j = 0; j < sys_.aux.size(); ++j) {
        const auto& a = sys_.aux[j];
        aux_vals->push_back(
            reduced_vector(aenvL_[j][static_cast<size_t>(bl)], aenvR_[j][static_cast<size_t>(br)],
                           a.tt, site, width, a.at_field, true));
      }
      blk->aux_apply = [aux_vals](int j, const Vec<T>& in) -> Vec<T> {
        return (*aux_vals)[static_cast<size_t>(j)].cwiseProduct(in);
      };
    }

    for (size_t j = 0; j < sys_.sources.size(); ++j) {
      const auto& src = sys_.sources[j];
      Vec<T> b = reduced_vector(senvL_[j][static_cast<size_t>(bl)], senvR_[j][static_cast<size_t>(br)],
                                src.tt, site, width, src.field, source_sampled());
      if (plan_.flavor == Flavor::P) {
        const auto& dims = blk->field_dims[static_cast<size_t>(src.field)];
        Tensor3<T> bt = Tensor3<T>::from_vector(b, dims[0], dims[1], dims[2]);
        b = to_sampled(src.field, bl, br, bt).as_vector();
      }
      blk->source_eff.push_back(std::move(b));
    }

    blk->term_matrix = [self, blk, site, width, bl, br, fused](int k) -> Mat<T> {
      const auto& term = self->sys_.terms[static_cast<size_t>(k)];
      const auto& el = self->envL_[static_cast<size_t>(k)][static_cast<size_t>(bl)];
      const auto& er = self->envR_[static_cast<size_t>(k)][static_cast<size_t>(br)];
      Mat<T> m;
      if (width == 0)
        m = dense_bond_op(el, er);
      else if (width == 1)
        m = dense_site_op(el, term.op.cores[static_cast<size_t>(site)], er);
      else
        m = dense_site_op(el, (*fused)[static_cast<size_t>(k)], er);
      if (self->plan_.flavor == Flavor::P) {
        const auto& s = self->states_[static_cast<size_t>(term.in_field)];
        const auto& linv = s.lsel_inv[static_cast<size_t>(bl)];
        const auto& rinv = s.rsel_inv[static_cast<size_t>(br)];
        const auto& dims = blk->field_dims[static_cast<size_t>(term.in_field)];
        Mat<T> tr = Mat<T>::Zero(dims[0] * dims[1] * dims[2], dims[0] * dims[1] * dims[2]);
        for (Index aq = 0; aq < dims[0]; ++aq)
          for (Index ax = 0; ax < dims[0]; ++ax)
            for (Index s2 = 0; s2 < dims[1]; ++s2)
              for (Index cq = 0; cq < dims[2]; ++cq)
                for (Index jx = 0; jx < dims[2]; ++jx)
                  tr((aq * dims[1] + s2) * dims[2] + cq, (ax * dims[1] + s2) * dims[2] + jx) =
                      linv(aq, ax) * rinv(jx, cq);
        m = m * tr;
      }
      return m;
    };
    return blk;
  }

  // effective vector of a fixed TT across `width` sites starting at `site`
  Vec<T> reduced_vector(const Mat<T>& el, const Mat<T>& er, const TtVector<T>& v, int site,
                        int width, int field, bool /*sampled_bra*/) const {
    (void)field;
    Tensor3<T> mid;
    if (width == 0) {
      mid = Tensor3<T>(el.cols(), 1, er.cols());
      if (el.cols() != er.cols()) throw shape_error("reduced_vector: bond env mismatch");
      for (Index a = 0; a < el.cols(); ++a) mid(a, 0, a) = T(1);
    } else if (width == 1) {
      mid = v.cores[static_cast<size_t>(site)];
    } else {
      mid = contract_pair(v.cores[static_cast<size_t>(site)], v.cores[static_cast<size_t>(site + 1)]);
    }
    Tensor3<T> out(el.rows(), mid.d, er.rows());
    for (Index s = 0; s < mid.d; ++s) {
      Mat<T> m = el * mid.slice(s) * er.transpose();
      for (Index x = 0; x < m.rows(); ++x)
        for (Index y = 0; y < m.cols(); ++y) out(x, s, y) = m(x, y);
    }
    return out.as_vector();
  }

  // --- reduced problem over the concatenated fields --------------------------

  struct Layout {
    std::vector<Index> offset;
    Index total = 0;
  };

  Layout layout_of(const SiteBlock<T>& blk) const {
    Layout lay;
    lay.offset.resize(static_cast<size_t>(nf_));
    for (int f = 0; f < nf_; ++f) {
      lay.offset[static_cast<size_t>(f)] = lay.total;
      lay.total += blk.dim(f);
    }
    return lay;
  }

  ReducedProblem<T> make_reduced(std::shared_ptr<SiteBlock<T>> blk) {
    ReducedProblem<T> rp;
    const Layout lay = layout_of(*blk);
    auto self = this;
    rp.on_eval = [self](Index n) { self->n_eval_ += n; };
    rp.is_linear = sys_.is_linear;
    rp.apply = [self, blk, lay](const Vec<T>& m, double t) -> Vec<T> {
      std::vector<Vec<T>> fields(static_cast<size_t>(self->nf_)), deriv(static_cast<size_t>(self->nf_));
      for (int f = 0; f < self->nf_; ++f) {
        fields[static_cast<size_t>(f)] =
            m.segment(lay.offset[static_cast<size_t>(f)], blk->dim(f));
        deriv[static_cast<size_t>(f)] = Vec<T>::Zero(blk->dim(f));
      }
      if (self->sys_.assemble) {
        self->sys_.assemble(*blk, t, fields, deriv);
      } else {
        for (size_t k = 0; k < self->sys_.terms.size(); ++k) {
          const auto& term = self->sys_.terms[k];
          deriv[static_cast<size_t>(term.out_field)] +=
              term.coeff_at(t) * blk->apply_term(int(k), fields[static_cast<size_t>(term.in_field)]);
        }
      }
      for (size_t j = 0; j < self->sys_.sources.size(); ++j)
        deriv[static_cast<size_t>(self->sys_.sources[j].field)] +=
            self->sys_.sources[j].coeff_at(t) * blk->source_eff[j];
      Vec<T> out(lay.total);
      for (int f = 0; f < self->nf_; ++f)
        out.segment(lay.offset[static_cast<size_t>(f)], blk->dim(f)) = deriv[static_cast<size_t>(f)];
      return out;
    };
    if (nf_ == 1 && sys_.is_linear && sys_.aux.empty() && !sys_.assemble) {
      rp.matrix = [self, blk](double t) -> Mat<T> {
        Mat<T> acc = Mat<T>::Zero(blk->dim(0), blk->dim(0));
        for (size_t k = 0; k < self->sys_.terms.size(); ++k)
          acc += self->sys_.terms[k].coeff_at(t) * blk->term_matrix(int(k));
        return acc;
      };
    }
    return rp;
  }

  struct SolveOut {
    Vec<T> mnew;
    std::vector<Vec<T>> targets;  // first target is always the input state
  };

  SolveOut solve(const ReducedProblem<T>& rp, const Vec<T>& m0, double t, double dt) {
    SolveOut out;
    switch (plan_.stepper) {
      case StepperKind::Euler:
        out.mnew = euler(rp, m0, t, dt);
        out.targets = {m0, out.mnew};
        break;
      case StepperKind::RK4: {
        auto r = rk4(rp, m0, t, dt);
        out.mnew = r.m;
        if (plan_.feiguin_targets) {
          out.targets = {m0, (m0 + T(2) * r.stage_inputs[1]) / T(3),
                         (T(4) * r.stage_inputs[2] - m0) / T(3), out.mnew};
        } else {
          out.targets = {r.stage_inputs[0], r.stage_inputs[1], r.stage_inputs[2],
                         r.stage_inputs[3]};
        }
        break;
      }
      case StepperKind::CN:
        out.mnew = crank_nicolson(rp, m0, t, dt, plan_.cn_tol, plan_.cn_max_iter);
        out.targets = {m0, out.mnew};
        break;
    }
    return out;
  }

  Vec<T> gather_centers(const SiteBlock<T>& blk, int width) {
    const Layout lay = layout_of(blk);
    Vec<T> m(lay.total);
    for (int f = 0; f < nf_; ++f) {
      Tensor3<T> c = width == 2 ? contract_pair(core(f, blk.site), core(f, blk.site + 1))
                                : core(f, blk.site);
      if (plan_.flavor == Flavor::P) c = to_sampled(f, blk.site, blk.site + width, c);
      m.segment(lay.offset[static_cast<size_t>(f)], blk.dim(f)) = c.as_vector();
    }
    return m;
  }

  void scatter_center(const SiteBlock<T>& blk, const Vec<T>& m, int width) {
    const Layout lay = layout_of(blk);
    for (int f = 0; f < nf_; ++f) {
      const auto& dims = blk.field_dims[static_cast<size_t>(f)];
      Tensor3<T> c = Tensor3<T>::from_vector(
          m.segment(lay.offset[static_cast<size_t>(f)], blk.dim(f)), dims[0], dims[1], dims[2]);
      if (plan_.flavor == Flavor::P) c = from_sampled(f, blk.site, blk.site + width, c);
      if (width == 2) throw state_error("scatter_center: two-site write not supported here");
      st(f).cores[static_cast<size_t>(blk.site)] = std::move(c);
    }
  }

  // --- sweeps ----------------------------------------------------------------

  void ap_sweep(double t, double dt, SweepDir dir) {
    const bool l2r = dir == SweepDir::LeftToRight;
    for (int step = 0; step < L_; ++step) {
      const int i = l2r ? step : L_ - 1 - step;
      auto blk = make_block(i, 1);
      auto rp = make_reduced(blk);
      const Vec<T> m0 = gather_centers(*blk, 1);
      auto sol = solve(rp, m0, t, dt);
      if (step == L_ - 1) {
        scatter_center(*blk, sol.mnew, 1);
        break;
      }
      const Layout lay = layout_of(*blk);
      for (int f = 0; f < nf_; ++f) {
        const auto& dims = blk->field_dims[static_cast<size_t>(f)];
        std::vector<Tensor3<T>> cands;
        for (const auto& tg : sol.targets) {
          Tensor3<T> c = Tensor3<T>::from_vector(
              tg.segment(lay.offset[static_cast<size_t>(f)], blk->dim(f)), dims[0], dims[1], dims[2]);
          if (plan_.flavor == Flavor::P) c = from_sampled(f, i, i + 1, c);
          cands.push_back(std::move(c));
        }
        auto exp = subspace_expand(cands, plan_.flavor, dir, plan_.internal_eps(), plan_.r_min,
                                   plan_.oversample);
        decimate_ap(st(f), i, exp, dir, plan_.flavor);
      }
      if (l2r)
        advance_left(i);
      else
        advance_right(i);
    }
  }

  void ps_sweep(double t, double h, SweepDir dir) {
    const bool l2r = dir == SweepDir::LeftToRight;
    for (int step = 0; step < L_; ++step) {
      const int i = l2r ? step : L_ - 1 - step;
      auto blk = make_block(i, 1);
      auto rp = make_reduced(blk);
      const Vec<T> m0 = gather_centers(*blk, 1);
      auto sol = solve(rp, m0, t, h);
      if (step == L_ - 1) {
        scatter_center(*blk, sol.mnew, 1);
        break;
      }
      const Layout lay = layout_of(*blk);
      std::vector<Mat<T>> weights(static_cast<size_t>(nf_));
      for (int f = 0; f < nf_; ++f) {
        const auto& dims = blk->field_dims[static_cast<size_t>(f)];
        Tensor3<T> c = Tensor3<T>::from_vector(
            sol.mnew.segment(lay.offset[static_cast<size_t>(f)], blk->dim(f)), dims[0], dims[1],
            dims[2]);
        if (plan_.flavor == Flavor::P) c = from_sampled(f, i, i + 1, c);
        weights[static_cast<size_t>(f)] = factor_site(f, i, c, dir);
      }
      if (l2r)
        advance_left(i);
      else
        advance_right(i);

      // backward evolution of the weight matrices on the updated bond manifold
      const int bond = l2r ? i + 1 : i;
      auto bblk = make_block(bond, 0);
      auto brp = make_reduced(bblk);
      const Layout blay = layout_of(*bblk);
      Vec<T> w0(blay.total);
      for (int f = 0; f < nf_; ++f) {
        Mat<T> w = weights[static_cast<size_t>(f)];
        if (plan_.flavor == Flavor::P) {
          const auto& s = st(f);
          w = s.lsel_mat[static_cast<size_t>(bond)] * w * s.rsel_mat[static_cast<size_t>(bond)];
        }
        Vec<T> flat(w.size());
        for (Index a = 0; a < w.rows(); ++a)
          for (Index b = 0; b < w.cols(); ++b) flat(a * w.cols() + b) = w(a, b);
        w0.segment(blay.offset[static_cast<size_t>(f)], bblk->dim(f)) = flat;
      }
      Vec<T> wb;
      switch (plan_.stepper) {
        case StepperKind::Euler:
          wb = euler(brp, w0, t + h, -h);
          break;
        case StepperKind::RK4:
          wb = rk4(brp, w0, t + h, -h).m;
          break;
        case StepperKind::CN:
          wb = crank_nicolson(brp, w0, t + h, -h, plan_.cn_tol, plan_.cn_max_iter);
          break;
      }
      for (int f = 0; f < nf_; ++f) {
        const auto& dims = bblk->field_dims[static_cast<size_t>(f)];
        Mat<T> w(dims[0], dims[2]);
        const Vec<T> seg = wb.segment(blay.offset[static_cast<size_t>(f)], bblk->dim(f));
        for (Index a = 0; a < dims[0]; ++a)
          for (Index b = 0; b < dims[2]; ++b) w(a, b) = seg(a * dims[2] + b);
        if (plan_.flavor == Flavor::P) {
          const auto& s = st(f);
          w = s.lsel_inv[static_cast<size_t>(bond)] * w * s.rsel_inv[static_cast<size_t>(bond)];
        }
        if (l2r) {
          detail::absorb_right(st(f), i, w);
          st(f).center = i + 1;
        } else {
          detail::absorb_left(st(f), i, w);
          st(f).center = i - 1;
        }
      }
    }
  }

  void ps2_sweep(double t, double h, SweepDir dir) {
    const bool l2r = dir == SweepDir::LeftToRight;
    for (int step = 0; step < L_ - 1; ++step) {
      const int i = l2r ? step : L_ - 2 - step;  // left site of the pair
      auto blk = make_block(i, 2);
      auto rp = make_reduced(blk);
      const Vec<T> m0 = gather_centers(*blk, 2);
      auto sol = solve(rp, m0, t, h);
      const Layout lay = layout_of(*blk);
      for (int f = 0; f < nf_; ++f) {
        const auto& dims = blk->field_dims[static_cast<size_t>(f)];
        Tensor3<T> s2 = Tensor3<T>::from_vector(
            sol.mnew.segment(lay.offset[static_cast<size_t>(f)], blk->dim(f)), dims[0], dims[1],
            dims[2]);
        if (plan_.flavor == Flavor::P) s2 = from_sampled(f, i, i + 2, s2);
        split_supercore(f, i, s2, dir);
      }
      if (l2r)
        advance_left(i);
      else
        advance_right(i + 1);

      const bool more = step < L_ - 2;
      if (!more) break;
      // backward evolution of the single trailing site
      const int j = l2r ? i + 1 : i;
      auto sblk = make_block(j, 1);
      auto srp = make_reduced(sblk);
      const Vec<T> s0 = gather_centers(*sblk, 1);
      Vec<T> sb;
      switch (plan_.stepper) {
        case StepperKind::Euler:
          sb = euler(srp, s0, t + h, -h);
          break;
        case StepperKind::RK4:
          sb = rk4(srp, s0, t + h, -h).m;
          break;
        case StepperKind::CN:
          sb = crank_nicolson(srp, s0, t + h, -h, plan_.cn_tol, plan_.cn_max_iter);
          break;
      }
      scatter_center(*sblk, sb, 1);
    }
  }

  // factor an updated centre core into (canonical basis, weight) and install
  // the basis at `site`; returns the weight matrix
  Mat<T> factor_site(int f, int site, const Tensor3<T>& c, SweepDir dir) {
    auto& s = st(f);
    if (dir == SweepDir::LeftToRight) {
      if (plan_.flavor == Flavor::X) {
        auto fx = xr_factor<T>(c.left_mat(), 0.0, rank_unbounded, 1);
        Tensor3<T> nc(c.r0, c.d, fx.interp.cols());
        MapRM<T>(nc.v.data(), c.r0 * c.d, fx.interp.cols()) = fx.interp;
        s.cores[static_cast<size_t>(site)] = std::move(nc);
        s.lsel_rows[static_cast<size_t>(site + 1)] = fx.rows;
        if (fx.oversampled) s.oversampled = true;
        return fx.w;
      }
      Mat<T> m = c.left_mat();
      const Index k = std::min(m.rows(), m.cols());
      Eigen::HouseholderQR<Mat<T>> qr(m);
      Mat<T> q = qr.householderQ() * Mat<T>::Identity(m.rows(), k);
      Mat<T> r = qr.matrixQR().topRows(k).template triangularView<Eigen::Upper>();
      Tensor3<T> nc(c.r0, c.d, k);
      MapRM<T>(nc.v.data(), c.r0 * c.d, k) = q;
      s.cores[static_cast<size_t>(site)] = std::move(nc);
      if (plan_.flavor == Flavor::P) refresh_lsel(f, site);
      return r;
    }
    if (plan_.flavor == Flavor::X) {
      auto fx = xr_factor<T>(Mat<T>(c.right_mat().transpose()), 0.0, rank_unbounded, 1);
      Tensor3<T> nc(fx.interp.cols(), c.d, c.r1);
      MapRM<T>(nc.v.data(), fx.interp.cols(), c.d * c.r1) = fx.interp.transpose();
      s.cores[static_cast<size_t>(site)] = std::move(nc);
      s.rsel_cols[static_cast<size_t>(site)] = fx.rows;
      if (fx.oversampled) s.oversampled = true;
      return fx.w.transpose();
    }
    Mat<T> m = c.right_mat();
    const Index k = std::min(m.rows(), m.cols());
    Eigen::HouseholderQR<Mat<T>> qr(m.adjoint());
    Mat<T> q = qr.householderQ() * Mat<T>::Identity(m.cols(), k);
    Mat<T> r = qr.matrixQR().topRows(k).template triangularView<Eigen::Upper>();
    Tensor3<T> nc(k, c.d, c.r1);
    MapRM<T>(nc.v.data(), k, c.d * c.r1) = q.adjoint();
    s.cores[static_cast<size_t>(site)] = std::move(nc);
    if (plan_.flavor == Flavor::P) refresh_rsel(f, site);
    return r.adjoint();
  }

  // split a two-site supercore (rl, d_i * d_j, rr) with the internal
  // tolerance; installs both cores, leaves the centre on the trailing site
  void split_supercore(int f, int i, const Tensor3<T>& s2, SweepDir dir) {
    auto& s = st(f);
    const Index di = core(f, i).d, dj = core(f, i + 1).d;
    const Index rl = s2.r0, rr = s2.r1;
    Mat<T> m(rl * di, dj * rr);
    for (Index a = 0; a < rl; ++a)
      for (Index si = 0; si < di; ++si)
        for (Index sj = 0; sj < dj; ++sj)
          for (Index b = 0; b < rr; ++b) m(a * di + si, sj * rr + b) = s2(a, si * dj + sj, b);
    const bool l2r = dir == SweepDir::LeftToRight;
    if (l2r) {
      if (plan_.flavor == Flavor::X) {
        auto fx = xr_factor<T>(m, plan_.internal_eps(), rank_unbounded, plan_.r_min);
        const Index k = fx.interp.cols();
        Tensor3<T> a(rl, di, k), b(k, dj, rr);
        MapRM<T>(a.v.data(), rl * di, k) = fx.interp;
        MapRM<T>(b.v.data(), k, dj * rr) = fx.w;
        s.cores[static_cast<size_t>(i)] = std::move(a);
        s.cores[static_cast<size_t>(i + 1)] = std::move(b);
        s.lsel_rows[static_cast<size_t>(i + 1)] = fx.rows;
        if (fx.oversampled) s.oversampled = true;
      } else {
        auto svd = svd_truncate(m, plan_.internal_eps(), rank_unbounded, plan_.r_min);
        Tensor3<T> a(rl, di, svd.rank), b(svd.rank, dj, rr);
        MapRM<T>(a.v.data(), rl * di, svd.rank) = svd.U;
        MapRM<T>(b.v.data(), svd.rank, dj * rr) =
            svd.S.template cast<T>().asDiagonal() * svd.V.adjoint();
        s.cores[static_cast<size_t>(i)] = std::move(a);
        s.cores[static_cast<size_t>(i + 1)] = std::move(b);
        if (plan_.flavor == Flavor::P) refresh_lsel(f, i);
      }
      s.center = i + 1;
    } else {
      if (plan_.flavor == Flavor::X) {
        auto fx = xr_factor<T>(Mat<T>(m.transpose()), plan_.internal_eps(), rank_unbounded,
                               plan_.r_min);
        const Index k = fx.interp.cols();
        Tensor3<T> a(rl, di, k), b(k, dj, rr);
        Mat<T> w = fx.w.transpose();  // (rl*di) x k
        MapRM<T>(a.v.data(), rl * di, k) = w;
        MapRM<T>(b.v.data(), k, dj * rr) = fx.interp.transpose();
        s.cores[static_cast<size_t>(i)] = std::move(a);
        s.cores[static_cast<size_t>(i + 1)] = std::move(b);
        s.rsel_cols[static_cast<size_t>(i + 1)] = fx.rows;
        if (fx.oversampled) s.oversampled = true;
      } else {
        auto svd = svd_truncate(m, plan_.internal_eps(), rank_unbounded, plan_.r_min);
        Tensor3<T> a(rl, di, svd.rank), b(svd.rank, dj, rr);
        MapRM<T>(a.v.data(), rl * di, svd.rank) =
            svd.U * svd.S.template cast<T>().asDiagonal();
        MapRM<T>(b.v.data(), svd.rank, dj * rr) = svd.V.adjoint();
        s.cores[static_cast<size_t>(i)] = std::move(a);
        s.cores[static_cast<size_t>(i + 1)] = std::move(b);
        if (plan_.flavor == Flavor::P) refresh_rsel(f, i + 1);
      }
      s.center = i;
    }
  }

  void refresh_lsel(int f, int site) {
    auto& s = st(f);
    const auto& c = core(f, site);
    auto idx = qdeim(Mat<T>(c.left_mat()), c.r1);
    s.lsel_rows[static_cast<size_t>(site + 1)] = idx;
    Mat<T> se(c.r1, c.r1);
    for (Index j = 0; j < c.r1; ++j) {
      const Index parent = idx[static_cast<size_t>(j)] / c.d;
      const Index bit = idx[static_cast<size_t>(j)] % c.d;
      se.row(j) = s.lsel_mat[static_cast<size_t>(site)].row(parent) * c.slice(bit);
    }
    s.lsel_mat[static_cast<size_t>(site + 1)] = se;
    Eigen::FullPivLU<Mat<T>> lu(se);
    if (!lu.isInvertible()) throw state_error("oblique selection became singular");
    s.lsel_inv[static_cast<size_t>(site + 1)] = lu.inverse();
  }

  void refresh_rsel(int f, int site) {
    auto& s = st(f);
    const auto& c = core(f, site);
    auto idx = qdeim(Mat<T>(c.right_mat().transpose()), c.r0);
    s.rsel_cols[static_cast<size_t>(site)] = idx;
    Mat<T> se(c.r0, c.r0);
    for (Index j = 0; j < c.r0; ++j) {
      const Index bit = idx[static_cast<size_t>(j)] / c.r1;
      const Index parent = idx[static_cast<size_t>(j)] % c.r1;
      se.col(j) = c.slice(bit) * s.rsel_mat[static_cast<size_t>(site + 1)].col(parent);
    }
    s.rsel_mat[static_cast<size_t>(site)] = se;
    Eigen::FullPivLU<Mat<T>> lu(se);
    if (!lu.isInvertible()) throw state_error("oblique selection became singular");
    s.rsel_inv[static_cast<size_t>(site)] = lu.inverse();
  }
};

}  // namespace detail

// One DLR time step of a coupled system: canonicalize, sweep with per-site
// blocking / solving / decimation, then a final opposite-direction rank
// truncation.  Returns the step diagnostics (r_in, r, evaluation count).
template <class T>
DiagnosticsRecord dlr_step(std::vector<TtVector<T>>& states, const DlrSystem<T>& sys, double t,
                           double dt, const SweepPlan& plan) {
  detail::SweepEngine<T> engine(states, sys, plan);
  return engine.run(t, dt);
}

template <class T>
DiagnosticsRecord dlr_step(TtVector<T>& state, const DlrSystem<T>& sys, double t, double dt,
                           const SweepPlan& plan) {
  std::vector<TtVector<T>> v{std::move(state)};
  auto rec = dlr_step(v, sys, t, dt, plan);
  state = std::move(v.front());
  return rec;
}

}  // namespace qtt
