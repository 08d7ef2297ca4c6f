#pragma once

#include <stdexcept>
#include <string>

namespace mflq {

class DimensionMismatch : public std::runtime_error {
public:
    explicit DimensionMismatch(const std::string& field)
        : std::runtime_error("dimension mismatch in field '" + field + "'"), field_(field) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

class AsymmetricWeight : public std::runtime_error {
public:
    AsymmetricWeight(const std::string& field, int node, double deviation)
        : std::runtime_error("weight '" + field + "' is not symmetric at node " + std::to_string(node) +
                             " (max deviation " + std::to_string(deviation) + ")"),
          field_(field), node_(node), deviation_(deviation) {}
    const std::string& field() const { return field_; }
    int node() const { return node_; }
    double deviation() const { return deviation_; }

private:
    std::string field_;
    int node_;
    double deviation_;
};

class BadGrid : public std::runtime_error {
public:
    explicit BadGrid(const std::string& what) : std::runtime_error("bad time grid: " + what) {}
};

class BadCovariance : public std::runtime_error {
public:
    explicit BadCovariance(double eig)
        : std::runtime_error("initial covariance is not positive semidefinite (eigenvalue " +
                             std::to_string(eig) + ")"),
          eig_(eig) {}
    double eigenvalue() const { return eig_; }

private:
    double eig_;
};

class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& what) : std::runtime_error("parse error: " + what) {}
};

class MissingField : public std::runtime_error {
public:
    explicit MissingField(const std::string& field)
        : std::runtime_error("missing required field '" + field + "'"), field_(field) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

class NonFiniteState : public std::runtime_error {
public:
    NonFiniteState(const std::string& what, int node)
        : std::runtime_error("non-finite state in " + what + " at node " + std::to_string(node)), node_(node) {}
    int node() const { return node_; }

private:
    int node_;
};

class SolvabilityError : public std::runtime_error {
public:
    SolvabilityError(const std::string& monitor, double time, double eig)
        : std::runtime_error("solvability monitor " + monitor + " failed at s=" + std::to_string(time) +
                             " (smallest eigenvalue " + std::to_string(eig) + ")"),
          monitor_(monitor), time_(time), eig_(eig) {}
    const std::string& monitor() const { return monitor_; }
    double time() const { return time_; }
    double eigenvalue() const { return eig_; }

private:
    std::string monitor_;
    double time_;
    double eig_;
};

class InvertibilityError : public std::runtime_error {
public:
    InvertibilityError(const std::string& monitor, double time, const std::string& detail)
        : std::runtime_error("invertibility monitor " + monitor + " failed at s=" + std::to_string(time) + ": " +
                             detail),
          monitor_(monitor), time_(time) {}
    const std::string& monitor() const { return monitor_; }
    double time() const { return time_; }

private:
    std::string monitor_;
    double time_;
};

class OutOfRange : public std::runtime_error {
public:
    explicit OutOfRange(double s) : std::runtime_error("time " + std::to_string(s) + " outside the grid") {}
};

} // namespace mflq
