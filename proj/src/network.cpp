#include "noir/network.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>

namespace noir {

bool NoirGraph::has_edge(Edge e) const
{
  return std::find(edges.begin(), edges.end(), e) != edges.end();
}

std::vector<int> NoirGraph::in_neighbors(int road) const
{
  std::vector<int> result;
  for (const auto &e : edges)
    if (e.to == road && e.from <= n_roads)
      result.push_back(e.from);
  std::sort(result.begin(), result.end());
  return result;
}

std::vector<int> NoirGraph::out_neighbors(int road) const
{
  std::vector<int> result;
  for (const auto &e : edges)
    if (e.from == road)
      result.push_back(e.to);
  std::sort(result.begin(), result.end());
  return result;
}

EdgeSet::EdgeSet(std::vector<Edge> edges) : edges_(std::move(edges))
{
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
}

bool EdgeSet::contains(Edge e) const
{
  return std::binary_search(edges_.begin(), edges_.end(), e);
}

std::vector<int> EdgeSet::in_neighbors(int road) const
{
  std::vector<int> result;
  for (const auto &e : edges_)
    if (e.to == road)
      result.push_back(e.from);
  std::sort(result.begin(), result.end());
  return result;
}

std::vector<int> EdgeSet::out_neighbors(int road) const
{
  std::vector<int> result;
  // edges_ is sorted by source, so the out-edges form one contiguous run
  auto it = std::lower_bound(edges_.begin(), edges_.end(), Edge{road, std::numeric_limits<int>::min()});
  for (; it != edges_.end() && it->from == road; ++it)
    result.push_back(it->to);
  return result;
}

EdgeSet uncontrolled_edges(const NoirGraph &graph)
{
  std::vector<char> governed(graph.state_size() + 1, 0);
  for (const auto &j : graph.junctions)
    for (int r : j.incoming)
      if (r >= 1 && r <= graph.state_size())
        governed[r] = 1;

  std::vector<char> feeds_exit(graph.state_size() + 1, 0);
  for (const auto &e : graph.edges)
    if (e.to == graph.exit_node() && e.from >= 1 && e.from <= graph.state_size())
      feeds_exit[e.from] = 1;

  std::vector<Edge> result;
  for (const auto &e : graph.edges) {
    if (e.from < 1 || e.from > graph.state_size())
      continue;
    if (feeds_exit[e.from] || !governed[e.from])
      result.push_back(e);
  }
  return EdgeSet(std::move(result));
}

void check_assignment(const NoirGraph &graph, const PhaseAssignment &assignment)
{
  if (assignment.size() != graph.junctions.size())
    throw std::invalid_argument("phase assignment has " + std::to_string(assignment.size()) +
                                " entries, network has " + std::to_string(graph.junctions.size()) +
                                " junctions");
  for (std::size_t j = 0; j < assignment.size(); ++j) {
    const int k = assignment[j];
    if (k < 1 || k > graph.junctions[j].phase_count())
      throw std::invalid_argument("junction " + std::to_string(graph.junctions[j].id) +
                                  ": phase index " + std::to_string(k) + " out of range 1.." +
                                  std::to_string(graph.junctions[j].phase_count()));
  }
}

EdgeSet active_edges(const NoirGraph &graph, const PhaseAssignment &assignment)
{
  check_assignment(graph, assignment);
  std::vector<Edge> result = uncontrolled_edges(graph).edges();
  for (std::size_t j = 0; j < assignment.size(); ++j) {
    const auto &phase = graph.junctions[j].phases[assignment[j] - 1];
    result.insert(result.end(), phase.begin(), phase.end());
  }
  return EdgeSet(std::move(result));
}

PhaseAssignment initial_assignment(const NoirGraph &graph)
{
  return PhaseAssignment(graph.junctions.size(), 1);
}

std::size_t assignment_space_size(const NoirGraph &graph)
{
  std::size_t total = 1;
  for (const auto &j : graph.junctions) {
    const auto mu = static_cast<std::size_t>(std::max(j.phase_count(), 1));
    if (total > std::numeric_limits<std::size_t>::max() / mu)
      return std::numeric_limits<std::size_t>::max();
    total *= mu;
  }
  return total;
}

}  // namespace noir
