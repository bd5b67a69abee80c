// Regenerates data/demo_conflicts.csv: a synthetic weekly event-count panel
// with 9 units, 98 pre-intervention and 48 post-intervention weeks. Unit
// "Alpha" receives a direct effect of about +25 events/week and unit "Echo" an
// interference effect of about +8; everything else is a two-factor background
// process with AR(2) noise. Deterministic; run with the target path as the
// only argument.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sci/rng.hpp"

namespace {

Eigen::MatrixXd ar2(int dim, int n, std::mt19937_64& gen, sci::rng::NormalSampler& normal) {
    const int burn = 100;
    Eigen::MatrixXd out(dim, n + burn);
    Eigen::VectorXd l1 = Eigen::VectorXd::Zero(dim), l2 = Eigen::VectorXd::Zero(dim);
    for (int t = 0; t < n + burn; ++t) {
        for (int i = 0; i < dim; ++i) out(i, t) = normal(gen);
        out.col(t) += 0.2 * l1 + 0.1 * l2;
        l2 = l1;
        l1 = out.col(t);
    }
    return out.rightCols(n);
}

}  // namespace

int main(int argc, char** argv) {
    const std::string path = argc > 1 ? argv[1] : "data/demo_conflicts.csv";
    const int n_units = 9, t0 = 98, t_total = 146;

    const std::vector<std::string> names = {"Alpha",  "Bravo", "Charlie", "Delta", "Echo",
                                            "Foxtrot", "Golf",  "Hotel",   "India"};
    const double base_level[] = {40, 15, 55, 30, 12, 25, 70, 90, 60};
    const double loadings[][2] = {{1.5, 0.5}, {-0.5, 1.5}, {1, 1},   {1, -1}, {1, 2},
                                  {-1, 1},    {1, 1},      {-1, 1},  {1.5, 1}};

    auto gen = sci::rng::engine(424242, 0);
    sci::rng::NormalSampler normal;
    const Eigen::MatrixXd w = ar2(2, t_total, gen, normal);
    const Eigen::MatrixXd eps = ar2(n_units, t_total, gen, normal);

    std::ofstream out(path);
    if (!out) {
        std::cerr << "cannot write " << path << "\n";
        return 1;
    }
    out << "week";
    for (const auto& n : names) out << ',' << n;
    out << '\n';
    for (int t = 1; t <= t_total; ++t) {
        const bool post = t > t0;
        const double ramp = post ? std::min(1.0, (t - t0) / 8.0) : 0.0;
        Eigen::Vector2d f = w.col(t - 1) + Eigen::Vector2d(3.0, 1.0);
        if (post) f += Eigen::Vector2d(0.8, 0.4);
        out << 'W' << (t < 10 ? "00" : t < 100 ? "0" : "") << t;
        for (int i = 0; i < n_units; ++i) {
            double y = base_level[i] + 4.0 * (loadings[i][0] * f(0) + loadings[i][1] * f(1)) +
                       3.0 * eps(i, t - 1);
            if (i == 0 && post) y += 25.0 * ramp + 3.0 * std::sin(2.0 * M_PI * t / 26.0);
            if (i == 4 && post) y += 8.0 * ramp;
            out << ',' << std::max(0.0, std::round(y));
        }
        out << '\n';
    }
    std::cout << "wrote " << path << "\n";
    return 0;
}
