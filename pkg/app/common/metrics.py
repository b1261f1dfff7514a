from aws_embedded_metrics import metric_scope
from aws_embedded_metrics.storage_resolution import StorageResolution

from app.common.logging import get_logger
from app.config.config import settings

logger = get_logger(__name__)


@metric_scope
def __put_metric(metric_name, value, unit, metrics):
    logger.debug(f"put metric: {metric_name} - {value} - {unit}")
    metrics.set_namespace("rnls-lab")
    metrics.put_metric(metric_name, value, unit, StorageResolution.STANDARD)


# Use counter() in lab code, not the decorated __put_metric; it swallows backend errors.
def counter(metric_name: str, value: float = 1) -> bool:
    """Emit a count metric when metrics are enabled.

    Returns:
        bool: True if the metric was handed to the backend.
    """
    if not settings.METRICS_ENABLED:
        return False
    try:
        __put_metric(metric_name, value, "Count")
        return True
    except Exception as e:
        logger.error(f"Error calling put_metric: {e}")
        return False
