#pragma once

#include <stdexcept>
#include <string>

namespace kbr {

// Base class for every error raised by the library. Callers that want to map
// failures to process exit codes can catch this and read name().
class Error : public std::runtime_error {
public:
    Error(std::string name, const std::string& what)
        : std::runtime_error(what), name_(std::move(name)) {}
    const std::string& name() const { return name_; }

private:
    std::string name_;
};

#define KBR_DEFINE_ERROR(NAME)                                   \
    class NAME : public Error {                                  \
    public:                                                      \
        explicit NAME(const std::string& what) : Error(#NAME, what) {} \
    }

KBR_DEFINE_ERROR(InvalidInput);
KBR_DEFINE_ERROR(InvalidConfig);
KBR_DEFINE_ERROR(InsufficientData);
KBR_DEFINE_ERROR(NumericalUnderflow);
KBR_DEFINE_ERROR(FitFailed);
KBR_DEFINE_ERROR(GradientDegenerate);
KBR_DEFINE_ERROR(LaplacianDegenerate);
KBR_DEFINE_ERROR(DegenerateCorrection);
KBR_DEFINE_ERROR(IllConditioned);
KBR_DEFINE_ERROR(SingularStencil);
KBR_DEFINE_ERROR(SolverFailed);
KBR_DEFINE_ERROR(NonPhysicalState);
KBR_DEFINE_ERROR(MetricUndefined);
KBR_DEFINE_ERROR(SchemaError);

// Lagrange iteration ran out of budget; carries the best residual seen.
class NotConverged : public Error {
public:
    NotConverged(const std::string& what, double residual)
        : Error("NotConverged", what), residual_(residual) {}
    double residual() const { return residual_; }

private:
    double residual_;
};

// A time integration blew up; carries the step index.
class Unstable : public Error {
public:
    Unstable(const std::string& what, long step)
        : Error("Unstable", what), step_(step) {}
    long step() const { return step_; }

private:
    long step_;
};

#undef KBR_DEFINE_ERROR

}  // namespace kbr
