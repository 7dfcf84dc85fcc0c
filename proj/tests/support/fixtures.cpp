#include "fixtures.hpp"

namespace fixture {

using hierfit::data::LongTable;
using hierfit::data::Observation;

LongTable with_heights(const LongTable& table, const Eigen::VectorXd& y) {
    std::vector<Observation> rows;
    rows.reserve(table.size());
    for (std::size_t i = 0; i < table.size(); ++i) {
        Observation o = table.row(i);
        o.height = y[static_cast<Eigen::Index>(i)];
        rows.push_back(std::move(o));
    }
    return LongTable::from_rows(rows);
}

LongTable layout(int blocks, int plots, int subplots, int plants, std::vector<double> times) {
    hierfit::sim::DesignLayout d;
    d.n_blocks = blocks;
    d.n_plots = plots;
    d.n_subplots = subplots;
    d.n_plants = plants;
    d.time_points = std::move(times);
    return hierfit::sim::layout(d);
}

double correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const Eigen::ArrayXd x = a.array() - a.mean();
    const Eigen::ArrayXd y = b.array() - b.mean();
    return (x * y).sum() / std::sqrt((x * x).sum() * (y * y).sum());
}

}  // namespace fixture
