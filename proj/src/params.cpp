#include "ctsynth/params.hpp"

namespace ctsynth {

template class ParamSet<float>;
template class ParamSet<double>;

}  // namespace ctsynth
