# Generated by Django 5.0.14 on 2026-10-17 09:12

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='RunRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('name', models.CharField(max_length=200)),
                ('scheme', models.CharField(choices=[('semi_implicit', 'Semi-implicit Euler'), ('fully_implicit', 'Fully implicit Euler')], max_length=20)),
                ('monitor', models.CharField(choices=[('semi_small', 'semi_small'), ('semi_short', 'semi_short'), ('full_small', 'full_small'), ('full_short', 'full_short'), ('none', 'none')], max_length=20)),
                ('n', models.IntegerField()),
                ('k', models.FloatField()),
                ('nu', models.FloatField()),
                ('steps', models.IntegerField()),
                ('termination', models.CharField(choices=[('completed', 'Completed'), ('horizon_reached', 'Horizon reached'), ('nonconvergence', 'Fixed point did not converge'), ('bound_violated', 'Bound violated')], max_length=20)),
                ('first_violation', models.IntegerField(blank=True, null=True)),
                ('output_dir', models.CharField(blank=True, max_length=500)),
                ('csv_sha256', models.CharField(blank=True, max_length=64)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'ordering': ['-created_at', '-id'],
            },
        ),
    ]
