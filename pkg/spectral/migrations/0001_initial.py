# Generated by Django 6.0 on 2026-10-19 10:12

import django.db.models.deletion
import spectral.storage
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='Experiment',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('name', models.CharField(max_length=255)),
                ('system', models.CharField(choices=[('fayad_torus_product', 'Fayad torus x rotation'), ('l63_product', 'Lorenz 63 x rotation'), ('l63_pure', 'Lorenz 63'), ('circle_rotation', 'Circle rotation'), ('external', 'External data')], max_length=32)),
                ('trajectory_hash', models.CharField(max_length=64, unique=True)),
                ('n_samples', models.PositiveIntegerField()),
                ('dt', models.FloatField()),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'db_table': 'spectral_experiment',
                'ordering': ('-created_at',),
            },
        ),
        migrations.CreateModel(
            name='KernelCacheEntry',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('key', models.CharField(max_length=64, unique=True)),
                ('q', models.PositiveIntegerField()),
                ('epsilon', models.FloatField()),
                ('k_nn', models.PositiveIntegerField(blank=True, null=True)),
                ('path', models.CharField(max_length=1024)),
                ('hits', models.PositiveIntegerField(default=0)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('experiment', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='kernelcacheentrys', to='spectral.experiment')),
            ],
            options={
                'verbose_name_plural': 'kernel cache entries',
                'db_table': 'spectral_kernel_cache',
                'ordering': ('q',),
            },
        ),
        migrations.CreateModel(
            name='Run',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('command', models.CharField(max_length=32)),
                ('status', models.CharField(choices=[('running', 'Running'), ('succeeded', 'Succeeded'), ('failed', 'Failed')], default='running', max_length=16)),
                ('config', models.JSONField(default=dict, encoder=spectral.storage.ArrayJSONEncoder)),
                ('manifest', models.JSONField(default=dict, encoder=spectral.storage.ArrayJSONEncoder)),
                ('output_dir', models.CharField(max_length=1024)),
                ('error', models.TextField(blank=True)),
                ('started_at', models.DateTimeField(auto_now_add=True)),
                ('finished_at', models.DateTimeField(blank=True, null=True)),
                ('experiment', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='runs', to='spectral.experiment')),
            ],
            options={
                'db_table': 'spectral_run',
                'ordering': ('-started_at',),
            },
        ),
    ]
