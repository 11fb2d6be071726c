"""
URL configuration for the rdeql_core project.

The `urlpatterns` list routes URLs to views. For more information please see:
    https://docs.djangoproject.com/en/4.2/topics/http/urls/

The pipeline itself runs through management commands; the HTTP surface only
exposes read-only helpers under /api/.
"""

from django.urls import path, include

urlpatterns = [
    path('api/', include('pipeline_api.urls')),
]
