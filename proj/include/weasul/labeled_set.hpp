#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "weasul/errors.hpp"

namespace weasul {

// Expert-labelled points in query order. The t-th entry of order() is the
// point labelled at iteration t.
class LabeledSet {
public:
    void add(std::size_t point, int label) {
        if (label != 0 && label != 1) {
            throw Error(ErrorKind::InvalidArgument, "expert label must be 0 or 1");
        }
        if (!labels_.try_emplace(point, label).second) {
            throw Error(ErrorKind::InvalidArgument,
                        "point " + std::to_string(point) + " is already labelled");
        }
        order_.push_back(point);
    }

    [[nodiscard]] bool contains(std::size_t point) const { return labels_.contains(point); }
    [[nodiscard]] int label(std::size_t point) const {
        auto it = labels_.find(point);
        if (it == labels_.end()) {
            throw Error(ErrorKind::UnknownPoint, "point " + std::to_string(point) + " is not labelled");
        }
        return it->second;
    }
    [[nodiscard]] const std::vector<std::size_t>& order() const noexcept { return order_; }
    [[nodiscard]] std::size_t size() const noexcept { return order_.size(); }
    [[nodiscard]] bool empty() const noexcept { return order_.empty(); }

private:
    std::unordered_map<std::size_t, int> labels_;
    std::vector<std::size_t> order_;
};

}  // namespace weasul
