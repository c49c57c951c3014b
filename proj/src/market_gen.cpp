#include <cmath>
#include <random>

#include "trilevel/market.hpp"

namespace trilevel {

namespace {

/// Uniform draw with an explicitly controlled mapping from the engine so
/// instances are reproducible independent of library distribution details.
class Draw {
 public:
  explicit Draw(std::uint64_t seed) : rng_(seed) {}
  double uniform(double lo, double hi) {
    const double u = (rng_() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
  }

 private:
  std::mt19937_64 rng_;
};

std::vector<std::pair<int, int>> topology_arcs(Topology t, int nodes) {
  std::vector<std::pair<int, int>> arcs;
  if (nodes < 2) return arcs;
  switch (t) {
    case Topology::Star:
      for (int k = 1; k < nodes; ++k) arcs.emplace_back(0, k);
      break;
    case Topology::Ring:
      if (nodes == 2) {
        arcs.emplace_back(0, 1);
      } else {
        for (int k = 0; k < nodes; ++k) arcs.emplace_back(k, (k + 1) % nodes);
      }
      break;
    case Topology::Complete:
      for (int u = 0; u < nodes; ++u)
        for (int v = u + 1; v < nodes; ++v) arcs.emplace_back(u, v);
      break;
  }
  return arcs;
}

}  // namespace

Mat dc_ptdf(int nodes, const std::vector<std::pair<int, int>>& arcs) {
  const int na = static_cast<int>(arcs.size());
  Mat ptdf = Mat::Zero(nodes, na);
  if (na == 0 || nodes < 2) return ptdf;
  // unit susceptances; node 0 is the reference and absorbs imbalance
  Mat lap = Mat::Zero(nodes, nodes);
  for (const auto& [u, v] : arcs) {
    lap(u, u) += 1.0;
    lap(v, v) += 1.0;
    lap(u, v) -= 1.0;
    lap(v, u) -= 1.0;
  }
  const Mat bred = lap.bottomRightCorner(nodes - 1, nodes - 1);
  const Mat binv = bred.inverse();
  // flow on arc (u,v), measured u->v, caused by one MW imported at node k
  for (int a = 0; a < na; ++a) {
    const auto& [u, v] = arcs[a];
    for (int k = 1; k < nodes; ++k) {
      const double th_u = u == 0 ? 0.0 : -binv(u - 1, k - 1);
      const double th_v = v == 0 ? 0.0 : -binv(v - 1, k - 1);
      const double f = th_u - th_v;
      if (std::abs(f) > 1e-12) ptdf(k, a) = f;
    }
  }
  return ptdf;
}

void GenRanges::validate() const {
  auto ordered = [](double lo, double hi) { return lo <= hi; };
  if (!(alpha_lo > 0 && ordered(alpha_lo, alpha_hi)))
    throw ValidationError("degenerate alpha range");
  if (!(beta_lo > 0 && ordered(beta_lo, beta_hi)))
    throw ValidationError("degenerate beta range");
  if (!ordered(nu_fossil_lo, nu_fossil_hi) || nu_fossil_lo < 0)
    throw ValidationError("degenerate fossil cost range");
  if (!ordered(nu_renew_lo, nu_renew_hi) || nu_renew_lo < 0)
    throw ValidationError("degenerate renewable cost range");
  if (!(eta_lo > 0 && ordered(eta_lo, eta_hi)))
    throw ValidationError("degenerate emission range");
  if (!(zmax_lo >= 0 && ordered(zmax_lo, zmax_hi)))
    throw ValidationError("degenerate capacity range");
  if (!(avail_lo > 0 && ordered(avail_lo, avail_hi) && avail_hi <= 1.0))
    throw ValidationError("degenerate availability range");
  if (!(line_lo >= 0 && ordered(line_lo, line_hi)))
    throw ValidationError("degenerate line range");
  if (renewable_fraction < 0 || renewable_fraction > 1)
    throw ValidationError("renewable fraction out of range");
}

PowerMarketInstance generate_instance(std::uint64_t seed, const GenDims& dims,
                                      const GenRanges& ranges) {
  if (dims.producers < 1 || dims.sources < 1 || dims.nodes < 1 ||
      dims.days < 1)
    throw ValidationError("instance dimensions must be positive");
  ranges.validate();
  Draw rnd(seed);

  PowerMarketInstance inst;
  for (int k = 0; k < dims.nodes; ++k)
    inst.nodes.push_back("n" + std::to_string(k));
  for (int i = 0; i < dims.producers; ++i)
    inst.producers.push_back("p" + std::to_string(i));
  const int n_renew = std::clamp(
      static_cast<int>(std::lround(ranges.renewable_fraction * dims.sources)),
      0, dims.sources);
  for (int j = 0; j < dims.sources; ++j) {
    Source s;
    s.renewable = j >= dims.sources - n_renew;
    s.id = (s.renewable ? "r" : "f") + std::to_string(j);
    inst.sources.push_back(s);
  }

  const auto arcs = topology_arcs(ranges.topology, dims.nodes);
  for (size_t a = 0; a < arcs.size(); ++a) {
    Line l;
    l.id = inst.nodes[arcs[a].first] + "-" + inst.nodes[arcs[a].second];
    l.t_minus = rnd.uniform(ranges.line_lo, ranges.line_hi);
    l.t_plus = rnd.uniform(ranges.line_lo, ranges.line_hi);
    inst.lines.push_back(l);
  }
  inst.ptdf = dc_ptdf(dims.nodes, arcs);

  inst.alpha = Mat(dims.nodes, dims.days);
  inst.beta = Mat(dims.nodes, dims.days);
  for (int k = 0; k < dims.nodes; ++k)
    for (int d = 0; d < dims.days; ++d) {
      inst.alpha(k, d) = rnd.uniform(ranges.alpha_lo, ranges.alpha_hi);
      inst.beta(k, d) = rnd.uniform(ranges.beta_lo, ranges.beta_hi);
    }

  const int nijk = dims.producers * dims.sources * dims.nodes;
  inst.eta = Vec::Zero(nijk);
  inst.nu = Vec::Zero(nijk);
  for (int i = 0; i < dims.producers; ++i)
    for (int j = 0; j < dims.sources; ++j)
      for (int k = 0; k < dims.nodes; ++k) {
        const int c = inst.ijk(i, j, k);
        if (inst.sources[j].renewable) {
          inst.nu[c] = rnd.uniform(ranges.nu_renew_lo, ranges.nu_renew_hi);
        } else {
          inst.nu[c] = rnd.uniform(ranges.nu_fossil_lo, ranges.nu_fossil_hi);
          inst.eta[c] = rnd.uniform(ranges.eta_lo, ranges.eta_hi);
        }
      }

  inst.zmax = Vec::Zero(nijk * dims.days);
  std::vector<double> base(nijk);
  for (int c = 0; c < nijk; ++c)
    base[c] = rnd.uniform(ranges.zmax_lo, ranges.zmax_hi);
  Mat avail = Mat::Ones(dims.sources, dims.days);
  for (int j = 0; j < dims.sources; ++j)
    if (inst.sources[j].renewable)
      for (int d = 0; d < dims.days; ++d)
        avail(j, d) = rnd.uniform(ranges.avail_lo, ranges.avail_hi);
  for (int i = 0; i < dims.producers; ++i)
    for (int j = 0; j < dims.sources; ++j)
      for (int k = 0; k < dims.nodes; ++k)
        for (int d = 0; d < dims.days; ++d)
          inst.zmax[inst.ijkd(i, j, k, d)] =
              base[inst.ijk(i, j, k)] * avail(j, d);

  inst.day_weights = Vec(dims.days);
  for (int d = 0; d < dims.days; ++d)
    inst.day_weights[d] = rnd.uniform(0.5, 1.5);
  inst.day_weights /= inst.day_weights.sum();
  // pin the last weight so the sum is exactly one in floating point
  if (dims.days > 1)
    inst.day_weights[dims.days - 1] =
        1.0 - inst.day_weights.head(dims.days - 1).sum();
  else
    inst.day_weights[0] = 1.0;

  inst.validate();
  return inst;
}

}  // namespace trilevel
