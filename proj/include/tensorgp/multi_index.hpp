#pragma once

#include <compare>
#include <cstddef>
#include <string>
#include <vector>

namespace tgp {

/// Per-dimension derivative orders of a partial derivative. Each order is
/// at most 2 and the total order at most 4.
class MultiIndex {
public:
    static constexpr int kMaxPerDim = 2;
    static constexpr int kMaxTotal = 4;

    MultiIndex() = default;
    explicit MultiIndex(std::vector<int> orders);

    static MultiIndex zero(int dim) { return MultiIndex(std::vector<int>(static_cast<std::size_t>(dim), 0)); }
    /// d^order / dx_axis^order.
    static MultiIndex axis(int dim, int axis, int order);

    [[nodiscard]] int dim() const noexcept { return static_cast<int>(orders_.size()); }
    [[nodiscard]] int operator[](int i) const { return orders_[static_cast<std::size_t>(i)]; }
    [[nodiscard]] int total() const noexcept;
    [[nodiscard]] const std::vector<int>& orders() const noexcept { return orders_; }
    [[nodiscard]] std::string str() const;

    auto operator<=>(const MultiIndex&) const = default;

private:
    std::vector<int> orders_;
};

}  // namespace tgp
