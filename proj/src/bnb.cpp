#include "trilevel/bnb.hpp"
#include <cstdlib>
#include <cstdio>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <mutex>
#include <queue>
#include <set>
#include <thread>

#include "trilevel/kernel.hpp"

namespace trilevel {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Node {
  long id = 0;
  int depth = 0;
  double bound = -kInf;  // minimization lower bound inherited from the parent
  std::vector<PairFix> fix;
  Boxes boxes;
};

struct NodeOrder {
  bool operator()(const Node& a, const Node& b) const {
    if (a.bound != b.bound) return a.bound < b.bound;
    return a.id < b.id;
  }
};

class Search {
 public:
  Search(const SingleLevelProgram& p, const SolveLimits& lim)
      : p_(p), lim_(lim), relax_(p, lim.box_fallback),
        sign_(p.sense == ObjSense::Min ? 1.0 : -1.0) {}

  SolveResult run();

 private:
  struct Outcome {
    bool fathomed = false;
    bool exhausted = false;  // fathomed only because no branching handle left
    double bound = -kInf;
    std::vector<Node> children;
  };

  Outcome process(const Node& node);
  void try_incumbent(const Vec& kernel_point);
  /// Rounding dive: fixes every undecided pair to the side the relaxation
  /// point favors and solves once; the verified result seeds the incumbent.
  void dive(const Node& node, const Vec& kernel_point);
  double incumbent_obj() const { return inc_obj_; }

  const SingleLevelProgram& p_;
  const SolveLimits& lim_;
  Relaxation relax_;
  double sign_;

  std::mutex mu_;
  double inc_obj_ = kInf;  // minimization value
  Vec inc_point_;
  VerifyReport inc_verify_;
  bool has_inc_ = false;
  std::set<std::string> warnings_;
  long next_id_ = 1;
  long nodes_processed_ = 0;
};

Search::Outcome Search::process(const Node& node) {
  Outcome out;
  const KernelProblem kp = relax_.build(node.boxes, node.fix);
  KernelOptions ko;
  ko.tol = 1e-9;
  const KernelResult kr = solve_kernel(kp, ko);

  if (kr.status == KernelStatus::Infeasible) {
    // the kernel's feasibility phase doubles as the restoration solve; a
    // verified or cleanly positive violation minimum is structural
    out.fathomed = true;
    out.bound = kInf;
    return out;
  }
  if (kr.status == KernelStatus::Unbounded) {
    out.bound = -kInf;
  } else if (kr.status == KernelStatus::Optimal) {
    out.bound = std::max(node.bound, kr.obj);
  } else {
    // numerical stall: fall back to the inherited bound, keep branching
    {
      std::lock_guard<std::mutex> g(mu_);
      warnings_.insert("kernel stall at node depth " +
                       std::to_string(node.depth));
    }
    if (getenv("TRILEVEL_DUMP_STALL")) {
      fprintf(stderr, "stall depth=%d fix=", node.depth);
      for (size_t k = 0; k < node.fix.size(); ++k)
        fprintf(stderr, "%c", node.fix[k] == PairFix::Undecided ? '.'
                              : node.fix[k] == PairFix::LeftZero ? 'L'
                                                                 : 'R');
      fprintf(stderr, " boxes=");
      for (int i = 0; i < p_.n(); ++i)
        if (node.boxes.lo[i] != relax_.root_boxes().lo[i] ||
            node.boxes.hi[i] != relax_.root_boxes().hi[i])
          fprintf(stderr, "%d:[%g,%g] ", i, node.boxes.lo[i],
                  node.boxes.hi[i]);
      fprintf(stderr, "\n");
    }
    out.bound = node.bound;
  }

  {
    std::lock_guard<std::mutex> g(mu_);
    if (out.bound >= inc_obj_ - lim_.fathom_tol) {
      out.fathomed = true;
      return out;
    }
  }

  if (kr.status == KernelStatus::Optimal ||
      kr.status == KernelStatus::IterationLimit) {
    try_incumbent(kr.v);
    dive(node, kr.v);
    std::lock_guard<std::mutex> g(mu_);
    if (out.bound >= inc_obj_ - lim_.fathom_tol) {
      out.fathomed = true;
      return out;
    }
  }

  if (kr.v.size() == 0) {
    out.fathomed = true;
    return out;
  }
  const Vec v = kr.v.head(p_.n());

  // 1) complementarity branching; near the root the candidate pairs are
  // scored by one child solve each (strong branching), deeper nodes take
  // the most violated pair outright
  std::vector<std::pair<double, int>> viol_pairs;
  for (size_t k = 0; k < p_.pairs.size(); ++k) {
    if (node.fix[k] != PairFix::Undecided) continue;
    const auto& pr = p_.pairs[k];
    const double prod =
        std::abs(std::max(v[pr.var], 0.0) *
                 std::max(p_.row_value(pr.row, v), 0.0));
    if (prod > lim_.compl_tol)
      viol_pairs.emplace_back(-prod, static_cast<int>(k));
  }
  std::sort(viol_pairs.begin(), viol_pairs.end());
  if (!viol_pairs.empty()) {
    int best_pair = viol_pairs[0].second;
    if (node.depth < 12 && viol_pairs.size() > 1) {
      const int cands =
          std::min<int>(4, static_cast<int>(viol_pairs.size()));
      double best_score = -kInf;
      KernelOptions ko;
      ko.tol = 1e-7;
      ko.max_iter = 60;
      ko.polish = false;
      for (int c = 0; c < cands; ++c) {
        const int k = viol_pairs[c].second;
        double score = kInf;
        for (PairFix side : {PairFix::LeftZero, PairFix::RightZero}) {
          auto fix = node.fix;
          fix[k] = side;
          const KernelResult ck = solve_kernel(relax_.build(node.boxes, fix), ko);
          double cb = out.bound;
          if (ck.status == KernelStatus::Infeasible)
            cb = kInf;
          else if (ck.status == KernelStatus::Optimal)
            cb = std::max(cb, ck.obj);
          score = std::min(score, cb);
        }
        if (score > best_score) {
          best_score = score;
          best_pair = k;
        }
      }
    }
    Node left = node, right = node;
    left.fix[best_pair] = PairFix::LeftZero;
    right.fix[best_pair] = PairFix::RightZero;
    left.bound = right.bound = out.bound;
    left.depth = right.depth = node.depth + 1;
    out.children = {std::move(left), std::move(right)};
    return out;
  }

  // 2) box bisection: policy scalars first (midpoint), then any bilinear
  // factor split at the relaxation value
  const auto factor_viol = relax_.factor_violations(kr.v);
  auto width = [&](int var) { return node.boxes.hi[var] - node.boxes.lo[var]; };
  int bisect = -1;
  bool policy_split = false;
  for (int pv : p_.policy_vars) {
    const auto it = factor_viol.find(pv);
    if (it == factor_viol.end()) continue;
    if (it->second > lim_.compl_tol && width(pv) > lim_.min_box_width) {
      bisect = pv;
      policy_split = true;
      break;
    }
  }
  if (bisect < 0) {
    double worst = lim_.compl_tol;
    for (const auto& [var, viol] : factor_viol) {
      if (viol > worst && width(var) > lim_.min_box_width) {
        worst = viol;
        bisect = var;
      }
    }
  }
  if (bisect >= 0) {
    const double lo = node.boxes.lo[bisect], hi = node.boxes.hi[bisect];
    double split = 0.5 * (lo + hi);
    if (!policy_split) {
      const double margin = 0.1 * (hi - lo);
      split = std::clamp(v[bisect], lo + margin, hi - margin);
    }
    Node left = node, right = node;
    left.boxes.hi[bisect] = split;
    right.boxes.lo[bisect] = split;
    left.bound = right.bound = out.bound;
    left.depth = right.depth = node.depth + 1;
    out.children = {std::move(left), std::move(right)};
    return out;
  }

  // no handle left: the node is resolved as tightly as this relaxation
  // allows; keep its bound alive rather than declare it solved
  out.fathomed = true;
  {
    std::lock_guard<std::mutex> g(mu_);
    if (out.bound < inc_obj_ - lim_.fathom_tol) {
      out.exhausted = true;
      warnings_.insert("exhausted branching with residual relaxation gap");
    }
  }
  return out;
}

void Search::dive(const Node& node, const Vec& kernel_point) {
  const Vec v0 = kernel_point.head(p_.n());
  std::vector<PairFix> fix = node.fix;
  for (size_t k = 0; k < p_.pairs.size(); ++k) {
    if (fix[k] != PairFix::Undecided) continue;
    const auto& pr = p_.pairs[k];
    const double left = std::max(v0[pr.var], 0.0);
    const double right = std::max(p_.row_value(pr.row, v0), 0.0);
    fix[k] = left <= right ? PairFix::LeftZero : PairFix::RightZero;
  }
  // sequential bilinear scheme on the pattern-fixed system: re-linearize the
  // products around the latest point until the true rows are consistent
  Vec point = v0;
  KernelOptions ko;
  ko.tol = 1e-9;
  for (int round = 0; round < 12; ++round) {
    const KernelProblem kp = relax_.build_at_point(node.boxes, fix, point);
    const KernelResult kr = solve_kernel(kp, ko);
    if (kr.status != KernelStatus::Optimal &&
        kr.status != KernelStatus::IterationLimit)
      return;
    const Vec next = kr.v.head(p_.n());
    const double step = (next - point).cwiseAbs().maxCoeff();
    point = next;
    const VerifyReport vr = verify_solution(p_, point);
    if (vr.pass(lim_.compl_tol)) {
      try_incumbent(point);
      return;
    }
    if (step <= 1e-10) return;  // converged to an inconsistent fixpoint
  }
}

void Search::try_incumbent(const Vec& kernel_point) {
  const Vec v = kernel_point.head(p_.n());
  const VerifyReport vr = verify_solution(p_, v);
  if (!vr.pass(lim_.compl_tol)) return;
  const double obj = sign_ * objective_value(p_, v);
  std::lock_guard<std::mutex> g(mu_);
  if (obj < inc_obj_ - 1e-12) {
    inc_obj_ = obj;
    inc_point_ = v;
    inc_verify_ = vr;
    has_inc_ = true;
    for (int fv : relax_.fallback_boxed()) {
      const double w = lim_.box_fallback;
      if (std::abs(v[fv]) > 0.999 * w)
        warnings_.insert("fallback box is active at variable " +
                         p_.vars[fv].name);
    }
  }
}

SolveResult Search::run() {
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  };

  SolveResult res;
  p_.validate();

  std::multiset<Node, NodeOrder> open;
  std::vector<std::pair<double, long>> stuck;  // unresolvable bounds

  Node root;
  root.id = 0;
  root.fix.assign(p_.pairs.size(), PairFix::Undecided);
  root.boxes = relax_.root_boxes();
  root.bound = -kInf;
  open.insert(std::move(root));

  bool hit_time = false, hit_nodes = false;
  int workers = std::max(1, lim_.threads);

  // queue-driven loop; with several workers the set is shared under a lock
  std::mutex qmu;
  std::condition_variable qcv;
  int active = 0;
  bool done = false;

  auto worker = [&]() {
    for (;;) {
      Node node;
      {
        std::unique_lock<std::mutex> lk(qmu);
        qcv.wait(lk, [&] { return done || !open.empty() || active == 0; });
        if (done) return;
        if (open.empty()) {
          if (active == 0) {
            done = true;
            qcv.notify_all();
            return;
          }
          continue;
        }
        // global gap check against the best open bound
        {
          std::lock_guard<std::mutex> g(mu_);
          double bound = open.begin()->bound;
          for (const auto& [b, id] : stuck) bound = std::min(bound, b);
          if (has_inc_) {
            const double gap = inc_obj_ - bound;
            if (gap <= lim_.tol_abs ||
                gap <= lim_.tol_rel * std::max(1.0, std::abs(inc_obj_))) {
              done = true;
              qcv.notify_all();
              return;
            }
          }
        }
        if (elapsed() > lim_.time_limit_s) {
          hit_time = true;
          done = true;
          qcv.notify_all();
          return;
        }
        if (lim_.node_limit >= 0 && nodes_processed_ >= lim_.node_limit) {
          hit_nodes = true;
          done = true;
          qcv.notify_all();
          return;
        }
        node = *open.begin();
        open.erase(open.begin());
        ++active;
        ++nodes_processed_;
      }
      Outcome out = process(node);
      {
        std::unique_lock<std::mutex> lk(qmu);
        for (auto& ch : out.children) {
          ch.id = next_id_++;
          open.insert(std::move(ch));
        }
        if (out.exhausted && std::isfinite(out.bound))
          stuck.emplace_back(out.bound, node.id);
        --active;
        qcv.notify_all();
      }
    }
  };

  if (workers == 1) {
    // deterministic sequential loop
    while (!open.empty()) {
      double bound = open.begin()->bound;
      for (const auto& [b, id] : stuck) bound = std::min(bound, b);
      if (has_inc_) {
        const double gap = inc_obj_ - bound;
        if (gap <= lim_.tol_abs ||
            gap <= lim_.tol_rel * std::max(1.0, std::abs(inc_obj_))) {
          break;
        }
      }
      if (elapsed() > lim_.time_limit_s) {
        hit_time = true;
        break;
      }
      if (lim_.node_limit >= 0 && nodes_processed_ >= lim_.node_limit) {
        hit_nodes = true;
        break;
      }
      Node node = *open.begin();
      open.erase(open.begin());
      ++nodes_processed_;
      Outcome out = process(node);
      for (auto& ch : out.children) {
        ch.id = next_id_++;
        open.insert(std::move(ch));
      }
      if (out.exhausted && std::isfinite(out.bound))
        stuck.emplace_back(out.bound, node.id);
    }
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  // final accounting
  double bound = has_inc_ ? inc_obj_ : kInf;
  if (!open.empty()) bound = std::min(bound, open.begin()->bound);
  for (const auto& [b, id] : stuck) bound = std::min(bound, b);

  res.nodes = nodes_processed_;
  res.wall_s = elapsed();
  res.warnings.assign(warnings_.begin(), warnings_.end());
  if (has_inc_) {
    res.has_point = true;
    res.point = inc_point_;
    res.objective = sign_ * inc_obj_;
    res.best_bound = sign_ * bound;
    res.verification = inc_verify_;
    res.gap_abs = inc_obj_ - bound;
    res.gap_rel = res.gap_abs / std::max(1.0, std::abs(inc_obj_));
    if (hit_time)
      res.status = SolveStatus::TimeLimit;
    else if (hit_nodes)
      res.status = SolveStatus::NodeLimit;
    else if (res.gap_abs <= lim_.tol_abs ||
             res.gap_rel <= lim_.tol_rel)
      res.status = SolveStatus::Optimal;
    else
      res.status = SolveStatus::Feasible;
  } else {
    if (hit_time)
      res.status = SolveStatus::TimeLimit;
    else if (hit_nodes)
      res.status = SolveStatus::NodeLimit;
    else
      res.status = SolveStatus::Infeasible;
    res.best_bound = sign_ * bound;
  }
  return res;
}

}  // namespace

double objective_value(const SingleLevelProgram& program, const Vec& point) {
  return program.objective.eval(point);
}

SolveResult branch_and_bound(const SingleLevelProgram& program,
                             const SolveLimits& limits) {
  Search s(program, limits);
  return s.run();
}

}  // namespace trilevel
