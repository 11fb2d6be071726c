"""
URL configuration for the pipeline app.

API Endpoints:
- GET /api/health/ - Health check, version and scheme identifiers
- POST /api/expressions/evaluate/ - Evaluate a rate expression in U

All endpoints return JSON responses. The pipeline stages themselves are
management commands (see manage.py help).

Example usage:
    POST /api/expressions/evaluate/
    Content-Type: application/json
    {
        "expression": "1 - U",
        "U": [0.0, 0.5]
    }

    Response:
    {
        "success": true,
        "values": [1.0, 0.5],
        "template": "C0 - C1*U"
    }
"""

from django.urls import path
from . import views

app_name = 'pipeline_api'

urlpatterns = [
    path('health/', views.HealthCheckView.as_view(), name='health_check'),
    path('expressions/evaluate/', views.ExpressionEvaluateView.as_view(), name='expression_evaluate'),
]
