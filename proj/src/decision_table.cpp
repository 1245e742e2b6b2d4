#include "titekit/decision_table.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <string>

#include "titekit/json_io.hpp"

namespace titekit {

namespace {

constexpr int kGridPoints = 64;
constexpr double kEdge = 1e-9;
constexpr double kBisectTol = 1e-10;
constexpr double kSameThreshold = 1e-6;
constexpr int kMaxEnumeratedN = 100;

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

// Action changes along m̃ for fixed (n, ỹ, c̃) over the open feasible interval
// (n-ỹ-c̃, n-ỹ); with nothing pending m̃ is the single point n-ỹ.
std::vector<ActionRegion> scan_regions(const DoseFindingEngine& engine, int n, int y, int c) {
  auto act = [&](double m) { return engine.core_action(EffectiveData{n, y, c, m}); };
  const double hi = n - y;
  if (c == 0) return {{act(hi), std::nullopt, std::nullopt}};
  const double lo = hi - c;

  std::vector<double> grid;
  grid.push_back(lo + kEdge);
  for (int i = 1; i < kGridPoints; ++i) grid.push_back(lo + (hi - lo) * i / kGridPoints);
  grid.push_back(hi - kEdge);

  std::vector<ActionRegion> regions;
  Action prev = act(grid.front());
  regions.push_back({prev, std::nullopt, std::nullopt});
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const Action cur = act(grid[i]);
    if (cur == prev) continue;
    if (action_code(cur) < action_code(prev)) {
      throw TableConsistencyError("decision is not monotone in effective non-DLT count at n=" +
                                  std::to_string(n) + ", y=" + std::to_string(y) +
                                  ", pending=" + std::to_string(c));
    }
    double a = grid[i - 1];
    double b = grid[i];
    while (b - a > kBisectTol) {
      const double mid = 0.5 * (a + b);
      (act(mid) == prev ? a : b) = mid;
    }
    const double t = 0.5 * (a + b);
    regions.back().upper = t;
    regions.push_back({cur, t, std::nullopt});
    prev = cur;
  }
  return regions;
}

bool same_regions(const std::vector<ActionRegion>& a, const std::vector<ActionRegion>& b) {
  if (a.size() != b.size()) return false;
  auto same_bound = [](const std::optional<double>& x, const std::optional<double>& y) {
    if (x.has_value() != y.has_value()) return false;
    return !x || std::fabs(*x - *y) <= kSameThreshold;
  };
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].action != b[i].action) return false;
    if (!same_bound(a[i].lower, b[i].lower) || !same_bound(a[i].upper, b[i].upper)) return false;
  }
  return true;
}

bool has_action(const TableRow& row, Action a) {
  return std::any_of(row.regions.begin(), row.regions.end(),
                     [a](const ActionRegion& r) { return r.action == a; });
}

// Escalation that the completed-patient rule would block. Rows within the first
// cohort are relabeled outright; later rows keep the escalation and carry a flag.
void apply_completion_rule(TableRow& row, const DesignParams& params) {
  const int completed = row.n - row.c_hi;
  if (!has_action(row, Action::Escalate) || completed >= params.min_complete_for_escalation) return;
  if (row.n <= params.cohort_size) {
    for (auto& r : row.regions) {
      if (r.action == Action::Escalate) r.action = Action::SuspendAccrual;
    }
  } else {
    row.completion_caveat = true;
  }
}

std::vector<TableRow> merge_pending(std::vector<TableRow> rows) {
  std::vector<TableRow> out;
  for (auto& row : rows) {
    if (!out.empty() && out.back().c_hi + 1 == row.c_lo && out.back().y_lo == row.y_lo &&
        same_regions(out.back().regions, row.regions)) {
      out.back().c_hi = row.c_hi;
      out.back().completion_caveat = out.back().completion_caveat || row.completion_caveat;
      continue;
    }
    out.push_back(std::move(row));
  }
  return out;
}

std::string region_cell(const TableRow& row, std::size_t i) {
  const ActionRegion& r = row.regions[i];
  if (row.regions.size() == 1) {
    if (r.action == Action::EliminateAndDeEscalate) return "Y & Eliminate";
    if (r.action == Action::SuspendAccrual) return "Suspend accrual";
    return "Y";
  }
  std::string text;
  if (r.lower && r.upper) {
    text = fmt2(*r.lower) + " < m̃ < " + fmt2(*r.upper);
  } else if (r.upper) {
    text = std::string(r.action == Action::DeEscalate ? "m̃ ≤ " : "m̃ < ") + fmt2(*r.upper);
  } else {
    const bool escalating = r.action == Action::Escalate || r.action == Action::SuspendAccrual;
    text = std::string(escalating ? "m̃ ≥ " : "m̃ > ") + fmt2(*r.lower);
  }
  if (r.action == Action::SuspendAccrual) text = "Suspend accrual if " + text;
  return text;
}

int column_of(Action a) {
  switch (a) {
    case Action::Escalate:
    case Action::SuspendAccrual:
      return 0;
    case Action::Stay:
      return 1;
    default:
      return 2;
  }
}

std::string y_label(const TableRow& row) {
  if (row.y_lo == row.y_hi) return std::to_string(row.y_lo);
  if (row.y_hi == row.n) return "≥" + std::to_string(row.y_lo);
  return std::to_string(row.y_lo) + "–" + std::to_string(row.y_hi);
}

std::string c_label(const TableRow& row) {
  if (row.c_lo == row.c_hi) return std::to_string(row.c_lo);
  if (row.c_lo == 0) return "≤" + std::to_string(row.c_hi);
  return std::to_string(row.c_lo) + "≤c̃≤" + std::to_string(row.c_hi);
}

std::string render_markdown(const DecisionTable& table) {
  std::ostringstream out;
  out << "| n | ỹ | c̃ | Escalation | Stay | De-escalation |\n";
  out << "|---|---|---|---|---|---|\n";
  bool any_caveat = false;
  for (const auto& row : table.rows) {
    std::string cells[3];
    for (std::size_t i = 0; i < row.regions.size(); ++i) {
      std::string& cell = cells[column_of(row.regions[i].action)];
      if (!cell.empty()) cell += "; ";
      cell += region_cell(row, i);
    }
    if (row.completion_caveat) {
      cells[0] += "*";
      any_caveat = true;
    }
    out << "| " << row.n << " | " << y_label(row) << " | " << c_label(row) << " | " << cells[0]
        << " | " << cells[1] << " | " << cells[2] << " |\n";
  }
  if (any_caveat) {
    out << "\n* Escalation requires at least " << table.params.min_complete_for_escalation
        << " patients at the dose to have completed assessment; otherwise suspend accrual.\n";
  }
  return out.str();
}

Action parse_action_token(const std::string& token) {
  if (auto a = action_from_token(token)) return *a;
  throw std::invalid_argument("unknown action '" + token + "' in table JSON");
}

std::string render_csv(const DecisionTable& table) {
  std::ostringstream out;
  out << "n,y,c_lo,c_hi,m_threshold_lo,m_threshold_hi,action\n";
  for (const auto& row : table.rows) {
    for (int y = row.y_lo; y <= row.y_hi; ++y) {
      for (const auto& r : row.regions) {
        out << row.n << ',' << y << ',' << row.c_lo << ',' << row.c_hi << ','
            << (r.lower ? fmt2(*r.lower) : "") << ',' << (r.upper ? fmt2(*r.upper) : "") << ','
            << action_token(r.action) << '\n';
      }
    }
  }
  return out.str();
}

std::string render_json(const DecisionTable& table) {
  Json rows = Json::array();
  for (const auto& row : table.rows) {
    Json regions = Json::array();
    for (const auto& r : row.regions) {
      regions.push_back({{"action", std::string(action_token(r.action))},
                         {"lower", r.lower ? Json(*r.lower) : Json(nullptr)},
                         {"upper", r.upper ? Json(*r.upper) : Json(nullptr)}});
    }
    rows.push_back({{"n", row.n},
                    {"y_lo", row.y_lo},
                    {"y_hi", row.y_hi},
                    {"c_lo", row.c_lo},
                    {"c_hi", row.c_hi},
                    {"completion_caveat", row.completion_caveat},
                    {"regions", std::move(regions)}});
  }
  const Json doc{{"design", std::string(to_string(table.design))},
                 {"params", to_json(table.params)},
                 {"rows", std::move(rows)}};
  return doc.dump(2) + "\n";
}

}  // namespace

std::vector<TableRow> generate_rows(const DoseFindingEngine& engine, int n, int y) {
  if (n < 1 || y < 0 || y > n) throw std::domain_error("generate_rows: need 0 <= y <= n, n >= 1");
  if (exceeds_elimination_cutoff(n, y, engine.params())) {
    return {TableRow{n, y, y, 0, n - y, {{Action::EliminateAndDeEscalate, {}, {}}}, false}};
  }
  std::vector<TableRow> rows;
  for (int c = 0; c <= n - y; ++c) rows.push_back({n, y, y, c, c, scan_regions(engine, n, y, c), false});
  return rows;
}

DecisionTable generate_table(EngineKind design, const DesignParams& params) {
  params.validate();
  if (params.max_n > kMaxEnumeratedN) {
    throw std::invalid_argument("table enumeration is limited to max_n <= " +
                                std::to_string(kMaxEnumeratedN));
  }
  const DoseFindingEngine engine(design, params);
  DecisionTable table{design, params, {}};

  std::vector<int> sizes;
  for (int n = params.cohort_size; n <= params.max_n; n += params.cohort_size) sizes.push_back(n);
  if (sizes.empty() || sizes.back() != params.max_n) sizes.push_back(params.max_n);

  for (int n : sizes) {
    std::vector<std::vector<TableRow>> blocks;
    for (int y = 0; y <= n; ++y) {
      auto rows = generate_rows(engine, n, y);
      for (auto& row : rows) apply_completion_rule(row, params);
      blocks.push_back(merge_pending(std::move(rows)));
    }
    // Neighbouring ỹ values that each collapse to one identical row are shown
    // as a single row over the ỹ range.
    std::vector<TableRow> merged;
    bool last_single = false;
    for (auto& block : blocks) {
      const bool single = block.size() == 1;
      if (single && last_single && same_regions(merged.back().regions, block[0].regions)) {
        merged.back().completion_caveat = merged.back().completion_caveat || block[0].completion_caveat;
        merged.back().y_hi = block[0].y_hi;
        merged.back().c_lo = std::min(merged.back().c_lo, block[0].c_lo);
        merged.back().c_hi = std::max(merged.back().c_hi, block[0].c_hi);
        continue;
      }
      last_single = single;
      for (auto& row : block) merged.push_back(std::move(row));
    }
    for (auto& row : merged) table.rows.push_back(std::move(row));
  }
  return table;
}

std::string justification(const DoseFindingEngine& engine, const EffectiveData& data) {
  const std::string prefix = "(" + std::to_string(data.n) + "," + std::to_string(data.y) + "): ";
  if (data.n < 1) return prefix + "no patients";
  for (const auto& row : generate_rows(engine, data.n, data.y)) {
    if (row.eliminated()) return prefix + region_cell(row, 0);
    if (row.c_lo != data.pending) continue;
    for (std::size_t i = 0; i < row.regions.size(); ++i) {
      const auto& r = row.regions[i];
      const bool above = !r.lower || data.m_eff > *r.lower;
      const bool below = !r.upper || data.m_eff <= *r.upper;
      if (above && below) return prefix + region_cell(row, i);
    }
    return prefix + region_cell(row, row.regions.size() - 1);
  }
  return prefix + "outside the tabulated range";
}

TableFormat table_format_from_string(std::string_view name) {
  if (name == "csv") return TableFormat::Csv;
  if (name == "markdown" || name == "md") return TableFormat::Markdown;
  if (name == "json") return TableFormat::Json;
  throw std::invalid_argument("unknown table format '" + std::string(name) +
                              "' (expected csv, markdown or json)");
}

std::string render_table(const DecisionTable& table, TableFormat format) {
  if (table.rows.empty()) throw std::invalid_argument("render_table: no rows");
  switch (format) {
    case TableFormat::Csv:
      return render_csv(table);
    case TableFormat::Markdown:
      return render_markdown(table);
    case TableFormat::Json:
      return render_json(table);
  }
  throw std::invalid_argument("render_table: unknown format");
}

DecisionTable parse_table_json(std::string_view text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw std::invalid_argument(std::string("table JSON: ") + e.what());
  }
  try {
    DecisionTable table;
    table.design = engine_from_string(doc.at("design").get<std::string>());
    table.params = design_params_from_json(doc.at("params"));
    for (const auto& jr : doc.at("rows")) {
      TableRow row;
      row.n = jr.at("n").get<int>();
      row.y_lo = jr.at("y_lo").get<int>();
      row.y_hi = jr.at("y_hi").get<int>();
      row.c_lo = jr.at("c_lo").get<int>();
      row.c_hi = jr.at("c_hi").get<int>();
      row.completion_caveat = jr.at("completion_caveat").get<bool>();
      for (const auto& reg : jr.at("regions")) {
        ActionRegion r;
        r.action = parse_action_token(reg.at("action").get<std::string>());
        if (!reg.at("lower").is_null()) r.lower = reg.at("lower").get<double>();
        if (!reg.at("upper").is_null()) r.upper = reg.at("upper").get<double>();
        row.regions.push_back(r);
      }
      table.rows.push_back(std::move(row));
    }
    return table;
  } catch (const Json::exception& e) {
    throw std::invalid_argument(std::string("table JSON: ") + e.what());
  }
}

}  // namespace titekit
