"""
Django app configuration for the pipeline.

The app carries the pipeline stage commands, their services and the small
HTTP surface; it defines no models.
"""

from django.apps import AppConfig


class PipelineApiConfig(AppConfig):
    """
    Configuration class for the pipeline app.
    """
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'pipeline_api'
    verbose_name = 'RD-BINN Pipeline'
