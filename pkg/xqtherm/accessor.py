import xarray as xr

from xqtherm.distributions import (
    Observable,
    _moment,
    _normalize_observable,
    _variance,
    write_table,
)
from xqtherm.errors import DomainError


@xr.register_dataarray_accessor("readout")
class ReadoutAccessor:
    """statistics of ensemble readout probabilities over the ``S`` dimension"""

    _obj: xr.DataArray

    def __init__(self, obj: xr.DataArray):
        self._obj = obj

    def _check(self):
        if "S" not in self._obj.dims:
            raise DomainError(
                f"readout probabilities need an 'S' dimension, got {self._obj.dims}"
            )

    @property
    def support(self):
        """The values of the ensemble readout."""
        self._check()
        return self._obj["S"].to_numpy()

    @property
    def n_thermometers(self) -> int:
        return int(self.support.max())

    def mean(self, observable: Observable = "S") -> float:
        """expectation of ``S`` or ``S²``

        Parameters
        ----------
        observable : {"S", "S2"}, default: "S"
            The observable.

        Returns
        -------
        mean : float
        """
        return _moment(
            self.support, self._obj.to_numpy(), _normalize_observable(observable)
        )

    def variance(self, observable: Observable = "S") -> float:
        """variance of ``S`` or ``S²``"""
        return _variance(
            self.support, self._obj.to_numpy(), _normalize_observable(observable)
        )

    def normalization_error(self) -> float:
        return abs(float(self._obj.sum()) - 1.0)

    def total_variation(self, other: xr.DataArray) -> float:
        """total variation distance to another readout distribution"""
        self._check()
        if self.n_thermometers != other.readout.n_thermometers:
            raise DomainError(
                "distributions describe different numbers of thermometers:"
                f" {self.n_thermometers} and {other.readout.n_thermometers}"
            )
        difference = abs(self._obj - other.reindex_like(self._obj, fill_value=0))
        return 0.5 * float(difference.sum())

    def to_text(self, path_or_buffer=None) -> str | None:
        """write the two-column ``S p(S)`` text format

        Parameters
        ----------
        path_or_buffer : str, path-like or file-like, optional
            Destination. If omitted, the text is returned.
        """
        self._check()
        return write_table(
            self.support, self._obj.to_numpy(), self._obj.attrs, path_or_buffer
        )
