#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "titekit/engine.hpp"

namespace titekit {

/// One action over a run of m̃ values. `lower`/`upper` are the bisected
/// thresholds bounding the run; absent means the run extends to the edge of
/// the feasible m̃ range.
struct ActionRegion {
  Action action = Action::Stay;
  std::optional<double> lower;
  std::optional<double> upper;
};

struct TableRow {
  int n = 0;
  int y_lo = 0;
  int y_hi = 0;
  int c_lo = 0;
  int c_hi = 0;
  std::vector<ActionRegion> regions;  ///< ordered by increasing m̃
  /// Escalation is listed but may still require more completed patients.
  bool completion_caveat = false;

  bool eliminated() const {
    return regions.size() == 1 && regions.front().action == Action::EliminateAndDeEscalate;
  }
};

struct DecisionTable {
  EngineKind design = EngineKind::Keyboard;
  DesignParams params;
  std::vector<TableRow> rows;
};

/// Thrown when the engine's decision is not monotone in m̃ for some (n, ỹ, c̃).
struct TableConsistencyError : std::logic_error {
  using std::logic_error::logic_error;
};

/// Enumerates n = cohort, 2·cohort, ..., max_n; every ỹ and pending count,
/// bisecting m̃ thresholds to 1e-10 and compacting rows that share regions.
/// Requires max_n <= 100.
DecisionTable generate_table(EngineKind design, const DesignParams& params);

/// Uncompacted rows for one (n, ỹ): one per pending count, or a single
/// eliminate row. Safety relabeling (suspension) is not applied.
std::vector<TableRow> generate_rows(const DoseFindingEngine& engine, int n, int y);

/// Table cell text that applies to `data`, e.g. "(3,1): m̃ ≤ 1.88".
std::string justification(const DoseFindingEngine& engine, const EffectiveData& data);

enum class TableFormat { Csv, Markdown, Json };
TableFormat table_format_from_string(std::string_view name);

std::string render_table(const DecisionTable& table, TableFormat format);
/// Inverse of the JSON rendering. Throws std::invalid_argument on bad input.
DecisionTable parse_table_json(std::string_view text);

}  // namespace titekit
