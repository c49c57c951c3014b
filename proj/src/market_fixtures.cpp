#include "trilevel/market.hpp"

namespace trilevel {

namespace {

PowerMarketInstance skeleton(std::vector<std::string> nodes,
                             std::vector<std::string> producers,
                             std::vector<Source> sources, int days) {
  PowerMarketInstance inst;
  inst.nodes = std::move(nodes);
  inst.producers = std::move(producers);
  inst.sources = std::move(sources);
  const int nijk = inst.I() * inst.J() * inst.K();
  inst.eta = Vec::Zero(nijk);
  inst.nu = Vec::Zero(nijk);
  inst.zmax = Vec::Zero(nijk * days);
  inst.alpha = Mat::Zero(inst.K(), days);
  inst.beta = Mat::Zero(inst.K(), days);
  inst.day_weights = Vec::Constant(days, 1.0 / days);
  if (days > 1)
    inst.day_weights[days - 1] = 1.0 - inst.day_weights.head(days - 1).sum();
  inst.ptdf = Mat::Zero(inst.K(), 0);
  return inst;
}

}  // namespace

PowerMarketInstance monopoly_fixture() {
  auto inst = skeleton({"n0"}, {"p0"}, {{"coal", false}}, 1);
  inst.alpha(0, 0) = 60.0;
  inst.beta(0, 0) = 0.5;
  inst.nu[0] = 15.0;
  inst.eta[0] = 0.8;
  inst.zmax[0] = 200.0;
  inst.validate();
  return inst;
}

PowerMarketInstance duopoly_fixture() {
  auto inst = skeleton({"n0"}, {"p0", "p1"}, {{"coal", false}}, 1);
  inst.alpha(0, 0) = 60.0;
  inst.beta(0, 0) = 0.5;
  for (int i = 0; i < 2; ++i) {
    inst.nu[inst.ijk(i, 0, 0)] = 15.0;
    inst.eta[inst.ijk(i, 0, 0)] = 0.8;
    inst.zmax[inst.ijkd(i, 0, 0, 0)] = 200.0;
  }
  inst.validate();
  return inst;
}

PowerMarketInstance two_node_two_day_fixture() {
  auto inst = skeleton({"n0", "n1"}, {"p0", "p1"},
                       {{"gas", false}, {"wind", true}}, 2);
  inst.lines = {{"n0-n1", 12.0, 12.0}};
  inst.ptdf = dc_ptdf(2, {{0, 1}});
  inst.alpha << 60.0, 52.0, 48.0, 44.0;
  inst.beta << 0.5, 0.45, 0.4, 0.5;
  // producer 0 owns gas at n0 and wind at n1; producer 1 the reverse
  auto cap = [&](int i, int j, int k, double d0, double d1) {
    inst.zmax[inst.ijkd(i, j, k, 0)] = d0;
    inst.zmax[inst.ijkd(i, j, k, 1)] = d1;
  };
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 2; ++k) {
      inst.nu[inst.ijk(i, 0, k)] = 22.0 + 2.0 * i;
      inst.eta[inst.ijk(i, 0, k)] = 0.45;
      inst.nu[inst.ijk(i, 1, k)] = 1.0;
    }
  cap(0, 0, 0, 40.0, 40.0);
  cap(0, 1, 1, 25.0, 8.0);
  cap(1, 0, 1, 35.0, 35.0);
  cap(1, 1, 0, 20.0, 6.0);
  inst.validate();
  return inst;
}

PowerMarketInstance nordic5_fixture() {
  // Five-node synthetic system shaped like the Nordic market: one producer
  // per country, nine sources of which four are renewable, three
  // representative days (high-demand winter day, windy day, sunny day).
  // All numbers are invented for this repository.
  std::vector<Source> sources = {
      {"nuclear", false}, {"coal", false},    {"gas_cc", false},
      {"gas_oc", false},  {"biomass", false}, {"solar", true},
      {"hydro", true},    {"wind_on", true},  {"wind_off", true}};
  auto inst = skeleton({"FI", "SE", "NO", "DK", "BA"},
                       {"pFI", "pSE", "pNO", "pDK", "pBA"}, sources, 3);
  inst.lines = {{"FI-SE", 90.0, 90.0},  {"FI-BA", 35.0, 35.0},
                {"SE-NO", 120.0, 120.0}, {"SE-DK", 50.0, 50.0},
                {"SE-BA", 30.0, 30.0},  {"NO-DK", 55.0, 55.0}};
  inst.ptdf = dc_ptdf(5, {{0, 1}, {0, 4}, {1, 2}, {1, 3}, {1, 4}, {2, 3}});

  // demand: day 0 winter (high), day 1 windy, day 2 sunny
  inst.alpha << 95, 78, 74,   // FI
      90, 74, 70,             // SE
      82, 68, 66,             // NO
      88, 72, 70,             // DK
      85, 71, 69;             // BA
  inst.beta << 0.30, 0.34, 0.34, 0.26, 0.30, 0.30, 0.28, 0.32, 0.32, 0.34,
      0.38, 0.38, 0.36, 0.40, 0.40;

  struct SrcData {
    double nu, eta;
  };
  const std::vector<SrcData> cost = {
      {9.0, 0.0},   // nuclear
      {18.0, 0.90}, // coal
      {30.0, 0.37}, // gas closed-cycle
      {46.0, 0.55}, // gas open-cycle
      {33.0, 0.0},  // biomass
      {0.5, 0.0},   // solar
      {0.8, 0.0},   // hydro
      {1.0, 0.0},   // onshore wind
      {1.2, 0.0},   // offshore wind
  };
  // capacity owned by each country's producer in its own node, MW
  // rows: sources, cols: FI SE NO DK BA
  const double own[9][5] = {
      {60, 70, 0, 0, 20},     // nuclear
      {30, 10, 0, 25, 35},    // coal
      {25, 15, 5, 30, 40},    // gas_cc
      {15, 10, 5, 15, 20},    // gas_oc
      {25, 20, 5, 15, 15},    // biomass
      {12, 15, 5, 12, 15},    // solar
      {35, 90, 160, 5, 10},   // hydro
      {35, 45, 25, 55, 30},   // wind_on
      {15, 20, 10, 35, 10},   // wind_off
  };
  // availability per day: solar, wind follow the day narrative
  const double avail[9][3] = {
      {1, 1, 1}, {1, 1, 1}, {1, 1, 1}, {1, 1, 1}, {1, 1, 1},
      {0.10, 0.45, 0.85},  // solar
      {0.95, 0.90, 0.90},  // hydro
      {0.55, 0.90, 0.25},  // wind_on
      {0.60, 0.95, 0.30},  // wind_off
  };
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 9; ++j)
      for (int k = 0; k < 5; ++k) {
        const int c = inst.ijk(i, j, k);
        inst.nu[c] = cost[j].nu;
        inst.eta[c] = cost[j].eta;
        if (k == i)
          for (int d = 0; d < 3; ++d)
            inst.zmax[inst.ijkd(i, j, k, d)] = own[j][i] * avail[j][d];
      }
  inst.day_weights << 0.30, 0.35, 0.35;
  inst.validate();
  return inst;
}

}  // namespace trilevel
