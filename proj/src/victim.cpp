#include "viba/victim.hpp"

#include <cmath>

#include "viba/errors.hpp"

namespace viba {

PredictionRecord Victim::predict(const std::vector<std::string>& tokens) {
  if (tokens.empty()) throw ValidationError("predict requires >= 1 token");
  calls_.fetch_add(1, std::memory_order_relaxed);
  PredictionRecord rec = predict_impl(tokens);
  if (rec.tags.size() != tokens.size())
    throw VictimError("victim returned " + std::to_string(rec.tags.size()) +
                      " tags for " + std::to_string(tokens.size()) + " tokens");
  if (rec.marginals && rec.marginals->size() != tokens.size())
    throw VictimError("victim marginals not aligned with tokens");
  if (rec.representations && rec.representations->size() != tokens.size())
    throw VictimError("victim representations not aligned with tokens");
  return rec;
}

std::size_t argmax_tag(const std::vector<double>& row) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < row.size(); ++i)
    if (row[i] > row[best]) best = i;
  return best;
}

}  // namespace viba
