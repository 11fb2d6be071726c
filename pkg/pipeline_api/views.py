"""
API views for the pipeline.

The HTTP surface is read-only: pipeline stages run through management
commands, never through a request.

Classes:
    HealthCheckView: Provides API health status and scheme identifiers
    ExpressionEvaluateView: Evaluates a symbolic rate expression on densities
"""

import logging

from django.utils import timezone
from rest_framework import status
from rest_framework.response import Response
from rest_framework.views import APIView

import py_rdeql
from py_rdeql import config
from py_rdeql.exceptions import ExpressionDomainError
from py_rdeql.sr import canonical_template, parse_expression

from .serializers import ExpressionEvaluateSerializer

logger = logging.getLogger(__name__)


class HealthCheckView(APIView):
    """
    API endpoint for health check and service information.

    **GET /api/health/**

    Response format:
    ```json
    {
        "status": "healthy",
        "service": "RD-BINN Pipeline",
        "version": "1.0.0",
        "timestamp": "2024-01-01T12:00:00Z",
        "schemes": {
            "residual_form": "...",
            "solver_scheme": "...",
            "es_validation": "..."
        },
        "endpoints": {
            "health": "/api/health/",
            "evaluate_expression": "/api/expressions/evaluate/"
        }
    }
    ```
    """

    def get(self, request, *args, **kwargs):
        """Handle GET request for health check."""
        return Response({
            'status': 'healthy',
            'service': 'RD-BINN Pipeline',
            'version': py_rdeql.__version__,
            'timestamp': timezone.now().isoformat(),
            'schemes': {
                'residual_form': config.residual_form,
                'solver_scheme': config.solver_scheme,
                'es_validation': config.es_validation_components,
            },
            'endpoints': {
                'health': '/api/health/',
                'evaluate_expression': '/api/expressions/evaluate/',
            }
        }, status=status.HTTP_200_OK)


class ExpressionEvaluateView(APIView):
    """
    API endpoint for evaluating a rate expression in the normalised density U.

    **POST /api/expressions/evaluate/**

    Request format:
    ```json
    {
        "expression": "0.01 + 0.02*exp(2*U)",
        "U": [0.0, 0.5, 1.0]
    }
    ```

    Response format:
    ```json
    {
        "success": true,
        "expression": "0.01 + 0.02*exp(2.0*U)",
        "values": [0.03, 0.0643..., 0.1577...],
        "complexity": 7,
        "template": "C0 + C1*exp(C2*U)"
    }
    ```

    Error responses:
    ```json
    {
        "success": false,
        "error": "Error type",
        "details": "Detailed error information"
    }
    ```

    **Status Codes:**
    - 200: Evaluation successful
    - 400: Malformed expression (with position) or evaluation outside an operator's domain
    """

    def post(self, request, *args, **kwargs):
        """Handle POST request for expression evaluation."""
        serializer = ExpressionEvaluateSerializer(data=request.data)
        if not serializer.is_valid():
            logger.error(f"Expression evaluation validation failed: {serializer.errors}")
            return Response({
                'success': False,
                'error': 'Validation error',
                'details': serializer.errors
            }, status=status.HTTP_400_BAD_REQUEST)

        validated_data = serializer.validated_data
        expr = parse_expression(validated_data['expression'])
        try:
            values = expr.evaluate(validated_data['U'], strict=True)
        except ExpressionDomainError as e:
            logger.warning(f"Expression {expr} left its domain: {str(e)}")
            return Response({
                'success': False,
                'error': 'Domain error',
                'details': str(e)
            }, status=status.HTTP_400_BAD_REQUEST)

        return Response({
            'success': True,
            'expression': str(expr),
            'values': [float(v) for v in values],
            'complexity': expr.complexity,
            'template': canonical_template(expr).display,
        }, status=status.HTTP_200_OK)
