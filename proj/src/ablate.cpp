#include <cmath>
#include <ostream>
#include <stdexcept>

#include "fsg/train.hpp"

namespace fsg {

namespace {

std::string letter(int i) { return std::string("(") + char('a' + i) + ")"; }

}  // namespace

std::vector<std::string> ablation_table_names() {
  return {"tableIV", "tableV", "tableVI", "tableVII"};
}

AblationTable ablation_table(const std::string& name, const FsgnetConfig& base) {
  AblationTable t;
  t.name = name;
  if (name == "tableIV") {
    // Modules added one at a time onto the plain U-Net.
    t.columns = {"MIAM", "MFM", "GPM", "GSGM"};
    for (int i = 0; i < 5; ++i) {
      FsgnetConfig c = base;
      c.use_miam = i >= 1;
      c.use_mfm = i >= 2;
      c.use_gpm = i >= 3;
      c.gsgf_count = i >= 4 ? 4 : 0;
      t.rows.push_back({letter(i), {c.use_miam, c.use_mfm, c.use_gpm, c.gsgf_count > 0}, c});
    }
  } else if (name == "tableV") {
    t.columns = {"PConv", "Residual", "CAM", "SAM"};
    for (int i = 0; i < 4; ++i) {
      FsgnetConfig c = base;
      c.miam = MiamFlags{true, i >= 1, i >= 2, i >= 3};
      t.rows.push_back({letter(i),
                        {c.miam.use_pconv, c.miam.use_residual, c.miam.use_cam, c.miam.use_sam},
                        c});
    }
  } else if (name == "tableVI") {
    t.columns = {"DConv3", "DConv5", "CAM", "FFT"};
    for (int i = 0; i < 4; ++i) {
      FsgnetConfig c = base;
      c.mfm = MfmFlags{true, i >= 1, i >= 2, i >= 3};
      t.rows.push_back(
          {letter(i), {c.mfm.use_d3, c.mfm.use_d5, c.mfm.use_cam, c.mfm.use_fft}, c});
    }
  } else if (name == "tableVII") {
    t.columns = {"2x", "4x", "8x", "16x"};
    for (int i = 0; i < 4; ++i) {
      FsgnetConfig c = base;
      c.use_gpm = true;
      c.gsgf_count = i + 1;
      std::vector<bool> marks(4);
      for (int k = 0; k < 4; ++k) marks[k] = k <= i;
      t.rows.push_back({letter(i), marks, c});
    }
  } else {
    throw std::invalid_argument("unknown row set '" + name +
                                "' (expected tableIV, tableV, tableVI or tableVII)");
  }
  return t;
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double sum = 0;
  for (double x : v) sum += x;
  const double mean = sum / static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double sq = 0;
  for (double x : v) sq += (x - mean) * (x - mean);
  return {mean, std::sqrt(sq / static_cast<double>(v.size() - 1))};
}

void write_ablation_csv(std::ostream& os, const AblationTable& table,
                        const std::vector<AblationResult>& results) {
  os << "table,strategy";
  for (const auto& c : table.columns) os << ',' << c;
  os << ",iou_mean,iou_std,niou_mean,niou_std,n_seeds\n";
  const auto old = os.precision(10);
  for (const auto& r : results) {
    os << table.name << ',' << r.row.strategy;
    for (bool m : r.row.marks) os << ',' << (m ? 1 : 0);
    const auto [im, is] = mean_std(r.iou);
    const auto [nm, ns] = mean_std(r.niou);
    os << ',' << im << ',' << is << ',' << nm << ',' << ns << ',' << r.iou.size() << '\n';
  }
  os.precision(old);
}

std::vector<AblationResult> ablate(const AblationTable& table,
                                   const std::vector<std::uint64_t>& seeds, TrainConfig train_cfg,
                                   const std::vector<Scene>& train_set,
                                   const std::vector<Scene>& test_set, bool dry_run,
                                   std::ostream* csv, std::ostream* progress) {
  if (seeds.empty()) throw std::invalid_argument("ablate: need at least one seed");
  if (dry_run) train_cfg.epochs = 1;
  std::vector<AblationResult> results;
  for (const AblationRow& row : table.rows) {
    AblationResult res{row, {}, {}};
    for (std::uint64_t seed : seeds) {
      train_cfg.seed = seed;
      const TrainResult tr = train(train_cfg, row.cfg, train_set, test_set);
      const MetricsReport& last = tr.log.back().test;
      res.iou.push_back(last.iou);
      res.niou.push_back(last.niou);
      if (progress) {
        *progress << table.name << ' ' << row.strategy << " seed " << seed << " iou=" << last.iou
                  << " niou=" << last.niou << '\n'
                  << std::flush;
      }
    }
    results.push_back(std::move(res));
  }
  if (csv) write_ablation_csv(*csv, table, results);
  return results;
}

}  // namespace fsg
