from django.urls import path

from . import api_views

app_name = 'harness_api'

urlpatterns = [
    path('houses/generate/', api_views.generate_house_api, name='generate_house'),
    path('prompts/', api_views.prompt_catalog_api, name='prompt_catalog'),
    path('trials/run/', api_views.run_trial_api, name='run_trial'),
]
