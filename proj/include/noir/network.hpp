#pragma once

#include <compare>
#include <cstddef>
#include <vector>

namespace noir {

// Road ids are 1-based throughout the public API: 1..N_in are inlet roads,
// N_in+1..N are internal roads and N+1 is the virtual exit node.

struct Edge
{
  int from = 0;
  int to = 0;

  friend auto operator<=>(const Edge &, const Edge &) = default;
};

using MovementPhase = std::vector<Edge>;

struct Junction
{
  int id = 0;
  std::vector<int> incoming;
  std::vector<int> outgoing;
  /// Phases in rotation order; the cycle wraps from the last back to the first.
  std::vector<MovementPhase> phases;
  /// Maximum number of steps a phase may stay active (T_L).
  int max_activation = 1;

  int phase_count() const { return static_cast<int>(phases.size()); }

  /// 1-based index of the phase following `phase` in the cycle.
  int successor(int phase) const { return phase % phase_count() + 1; }

  bool operator==(const Junction &) const = default;
};

struct NoirGraph
{
  int n_roads = 0;
  int n_inlets = 0;
  std::vector<Edge> edges;
  std::vector<Junction> junctions;

  int exit_node() const { return n_roads + 1; }
  /// Length of the state vector (real roads plus the exit accumulator).
  int state_size() const { return n_roads + 1; }
  int junction_count() const { return static_cast<int>(junctions.size()); }
  bool is_inlet(int road) const { return road >= 1 && road <= n_inlets; }
  bool has_edge(Edge e) const;

  std::vector<int> in_neighbors(int road) const;
  std::vector<int> out_neighbors(int road) const;

  bool operator==(const NoirGraph &) const = default;
};

/// Network phase assignment: the 1-based phase index selected at each
/// junction, in junction-list order.
using PhaseAssignment = std::vector<int>;

/// Edge subset of a graph with neighbor queries restricted to it.
class EdgeSet
{
public:
  EdgeSet() = default;
  explicit EdgeSet(std::vector<Edge> edges);

  const std::vector<Edge> &edges() const { return edges_; }
  bool contains(Edge e) const;
  std::vector<int> in_neighbors(int road) const;
  std::vector<int> out_neighbors(int road) const;
  std::size_t size() const { return edges_.size(); }

private:
  std::vector<Edge> edges_;  // sorted, unique
};

/// Edges that no signal controls: every out-edge of a road feeding the exit,
/// and every out-edge of a road that is not incoming at any junction.
EdgeSet uncontrolled_edges(const NoirGraph &graph);

/// E_lambda: union of the selected phases plus the uncontrolled edges.
/// Throws std::invalid_argument when the assignment has the wrong length or
/// references a phase index out of range.
EdgeSet active_edges(const NoirGraph &graph, const PhaseAssignment &assignment);

/// Throws std::invalid_argument unless every entry is a valid phase index.
void check_assignment(const NoirGraph &graph, const PhaseAssignment &assignment);

/// Assignment with phase 1 at every junction.
PhaseAssignment initial_assignment(const NoirGraph &graph);

/// Number of assignments in the full product space (saturates at SIZE_MAX).
std::size_t assignment_space_size(const NoirGraph &graph);

}  // namespace noir
