#include "tensorgp/multi_index.hpp"

#include "tensorgp/errors.hpp"

#include <numeric>
#include <sstream>

namespace tgp {

MultiIndex::MultiIndex(std::vector<int> orders) : orders_(std::move(orders)) {
    for (int o : orders_) {
        if (o < 0 || o > kMaxPerDim)
            throw Error(ErrorCode::UnsupportedDerivativeOrder, "per-dimension derivative order must be in 0..2");
    }
    if (total() > kMaxTotal)
        throw Error(ErrorCode::UnsupportedDerivativeOrder, "total derivative order exceeds 4");
}

MultiIndex MultiIndex::axis(int dim, int axis, int order) {
    if (axis < 0 || axis >= dim) throw Error(ErrorCode::InvalidArgument, "derivative axis out of range");
    std::vector<int> orders(static_cast<std::size_t>(dim), 0);
    orders[static_cast<std::size_t>(axis)] = order;
    return MultiIndex(std::move(orders));
}

int MultiIndex::total() const noexcept { return std::accumulate(orders_.begin(), orders_.end(), 0); }

std::string MultiIndex::str() const {
    std::ostringstream out;
    out << '(';
    for (std::size_t i = 0; i < orders_.size(); ++i) out << (i ? "," : "") << orders_[i];
    out << ')';
    return out.str();
}

}  // namespace tgp
