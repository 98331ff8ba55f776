#pragma once

#include <initializer_list>
#include <vector>

#include "selfaffine/linalg.hpp"

namespace selfaffine::testing {

inline Mat mat(int n, std::initializer_list<double> rows) {
    Mat m(n, n);
    auto it = rows.begin();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = *it++;
    return m;
}

inline Vec vec(std::initializer_list<double> xs) {
    Vec v(static_cast<int>(xs.size()));
    int i = 0;
    for (double x : xs) v[i++] = x;
    return v;
}

inline std::vector<Vec> digits1(std::initializer_list<double> ds) {
    std::vector<Vec> out;
    for (double d : ds) out.push_back(vec({d}));
    return out;
}

inline ExpandingSystem system1(double a, std::initializer_list<double> ds,
                               ArithmeticMode mode = ArithmeticMode::ExactInteger) {
    return ExpandingSystem::create(spectral_data(mat(1, {a})), digits1(ds), mode);
}

/// A = diag(2, 3), D = {0,1} x {0,1,2}.
inline ExpandingSystem product_system(ArithmeticMode mode = ArithmeticMode::ExactInteger) {
    std::vector<Vec> ds;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 3; ++j) ds.push_back(vec({double(i), double(j)}));
    return ExpandingSystem::create(spectral_data(mat(2, {2, 0, 0, 3})), ds, mode);
}

}  // namespace selfaffine::testing
