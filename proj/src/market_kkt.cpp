#include "trilevel/market.hpp"
#include "trilevel/reformulate.hpp"

namespace trilevel {

MarketKktSystem assemble_kkt_system(const PowerMarketInstance& inst,
                                    double production_weight) {
  MarketKktSystem sys;
  const TrilevelModel model = build_trilevel(inst, production_weight);
  ReformulateOptions opts;
  opts.aggregate = GapAggregation::Group;  // one duality-gap row per day
  sys.program = strong_duality_reformulate(model, opts);
  for (int d = 0; d < inst.D(); ++d) sys.day_lcps.push_back(day_lcp(inst, d));
  return sys;
}

}  // namespace trilevel
